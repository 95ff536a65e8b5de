"""Command-line interface: simulate, fit, prior-sample, report.

Every command writes plain CSV/JSON files plus a manifest.json recording the
command, resolved configuration, seed, input digests, and wall-clock timings.
All stochastic commands are reproducible from (seed, inputs, config); the
manifest's timings are the only bytes that vary between identical runs.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .cavi import FitOptions, column_labels, fit
from .config import (
    BUILTIN_CONFIGS,
    builtin_config,
    config_to_dict,
    load_config,
    validate_config,
)
from .dataset import load_dataset_csv, standardize, write_dataset_csv
from .errors import EfclustError
from .estimates import (
    build_report,
    contingency_with_labels,
    map_assignments_from_rho,
    permutation_accuracy,
)
from .prior import sample_partition, sample_prior_curves
from .synth import SimulationSpec, benchmark_spec, benchmark_truths, generate


def _fmt(x) -> str:
    return repr(float(x))


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(path: Path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(out_dir: Path, command: str, seed, config_doc, inputs,
                    timings, extra=None) -> None:
    doc = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": config_doc,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "timings_seconds": timings,
    }
    if extra:
        doc.update(extra)
    _write_json(out_dir / "manifest.json", doc)


def _resolve_config(spec: str):
    path = Path(spec)
    if path.exists():
        return load_config(path), [path]
    if spec in BUILTIN_CONFIGS:
        return builtin_config(spec), []
    raise EfclustError(
        f"config {spec!r} is neither a readable file nor one of {BUILTIN_CONFIGS}"
    )


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    t0 = time.perf_counter()
    if args.scenario is not None:
        spec = benchmark_spec(args.scenario, seed=args.seed, n=args.n,
                              t_count=args.t_count)
    else:
        if args.noise_variance is None:
            raise EfclustError("provide --scenario or --noise-variance")
        blocks = tuple(int(b) for b in args.blocks.split(","))
        truths = benchmark_truths()
        if len(blocks) > len(truths):
            raise EfclustError(
                f"at most {len(truths)} blocks available, got {len(blocks)}"
            )
        spec = SimulationSpec(
            n=args.n,
            t_count=args.t_count,
            true_functions=truths[: len(blocks)],
            block_sizes=blocks,
            noise_variance=args.noise_variance,
            seed=args.seed,
        )
    data, labels = generate(spec)
    write_dataset_csv(data, out / "data.csv")
    with open(out / "truth.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["unit_id", "label"])
        for uid, lab in zip(data.unit_ids, labels):
            writer.writerow([uid, lab])
    _write_manifest(
        out, "simulate", args.seed, None, [], {"total": time.perf_counter() - t0},
        extra={"simulation": {
            "n": spec.n, "t_count": spec.t_count,
            "block_sizes": list(spec.block_sizes),
            "noise_variance": spec.noise_variance,
        }},
    )
    print(f"wrote {out / 'data.csv'} ({data.n_units} units)")
    return 0


def _evaluation_grid(data) -> np.ndarray:
    points = sorted({float(t) for u in data.units for t in u.grid})
    return np.array(points)


def cmd_fit(args) -> int:
    out = _out_dir(args)
    timings = {}
    t0 = time.perf_counter()
    cfg, cfg_inputs = _resolve_config(args.config)
    validate_config(cfg)
    data_path = Path(args.data)
    data = load_dataset_csv(data_path)
    if not args.no_standardize:
        data = standardize(data)
    timings["load"] = time.perf_counter() - t0

    progress = None
    if args.progress:
        def progress(restart, sweep, elbo):
            print(f"restart {restart} sweep {sweep} elbo {elbo:.6f}",
                  file=sys.stderr)

    t1 = time.perf_counter()
    opts = FitOptions(
        max_sweeps=args.max_sweeps,
        rel_tol=args.rel_tol,
        restarts=args.restarts,
        seed=args.seed,
        init=args.init,
    )
    state, diag = fit(data, cfg, opts, progress=progress, workers=args.workers)
    timings["fit"] = time.perf_counter() - t1

    t2 = time.perf_counter()
    grid = _evaluation_grid(data)
    report = build_report(state, cfg, data=data, grid=grid)
    labels = column_labels(state.h_list)

    with open(out / "assignments.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["unit_id", "class", "cluster", "max_rho"])
        for i, uid in enumerate(data.unit_ids):
            l, h = report.g_hat[i]
            writer.writerow([uid, l, h, _fmt(state.rho[i].max())])

    with open(out / "rho.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["unit_id"] + [f"rho_{l}_{h}" for l, h in labels])
        for i, uid in enumerate(data.unit_ids):
            writer.writerow([uid] + [_fmt(v) for v in state.rho[i]])

    with open(out / "curves.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"curve_{l}_{h}" for l, h in report.occupied])
        for s, t in enumerate(grid):
            writer.writerow(
                [_fmt(t)] + [_fmt(report.curves[lab][s]) for lab in report.occupied]
            )

    with open(out / "elbo.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["restart", "sweep", "elbo"])
        for r, trace in enumerate(diag.traces):
            for k, value in enumerate(trace, start=1):
                writer.writerow([r, k, _fmt(value)])

    occupied_doc = []
    for lab in report.occupied:
        entry = {
            "class": lab[0],
            "atom": lab[1],
            "frequency": report.frequencies[lab],
        }
        if report.volumes is not None:
            entry["volume"] = report.volumes[lab]
        occupied_doc.append(entry)
    _write_json(out / "summary.json", {
        "n_units": data.n_units,
        "n_occupied_clusters": report.n_clusters,
        "occupied": occupied_doc,
        "best_restart": diag.best_restart,
        "final_elbo": diag.final_elbos[diag.best_restart],
        "converged": diag.converged[diag.best_restart],
        "n_sweeps": diag.n_sweeps[diag.best_restart],
        "standardized": not args.no_standardize,
    })
    timings["write"] = time.perf_counter() - t2
    _write_manifest(
        out, "fit", args.seed, config_to_dict(cfg),
        [data_path, *cfg_inputs], timings,
        extra={"options": {
            "max_sweeps": opts.max_sweeps, "rel_tol": opts.rel_tol,
            "restarts": opts.restarts, "init": opts.init,
            "workers": args.workers,
        }},
    )
    print(
        f"fit: {report.n_clusters} occupied clusters, "
        f"elbo {diag.final_elbos[diag.best_restart]:.4f} "
        f"(restart {diag.best_restart})"
    )
    return 0


def _parse_grid(spec: str) -> np.ndarray:
    try:
        lo, hi, num = spec.split(":")
        return np.linspace(float(lo), float(hi), int(num))
    except ValueError:
        raise EfclustError(f"bad grid {spec!r}, expected lo:hi:num") from None


def cmd_prior_sample(args) -> int:
    out = _out_dir(args)
    t0 = time.perf_counter()
    cfg, cfg_inputs = _resolve_config(args.config)
    validate_config(cfg)
    draw = sample_partition(cfg, args.n, seed=args.seed)
    with open(out / "partition.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["unit", "class", "cluster"])
        for i, (f, (l, h)) in enumerate(zip(draw.class_labels, draw.cluster_labels),
                                        start=1):
            writer.writerow([i, f, h])
    if args.curve_class is not None:
        grid = _parse_grid(args.grid)
        curves = sample_prior_curves(
            cfg, args.curve_class, args.curve_count, grid, seed=args.seed
        )
        with open(out / "curves.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["t"] + [f"draw_{k}" for k in range(1, args.curve_count + 1)]
            )
            for s, t in enumerate(grid):
                writer.writerow([_fmt(t)] + [_fmt(v) for v in curves[:, s]])
    _write_manifest(
        out, "prior-sample", args.seed, config_to_dict(cfg), cfg_inputs,
        {"total": time.perf_counter() - t0},
    )
    print(f"sampled partition of {args.n} units into {draw.n_clusters()} clusters")
    return 0


def _load_rho_csv(path: Path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        labels = []
        for name in header[1:]:
            parts = name.split("_")
            labels.append((int(parts[1]), int(parts[2])))
        unit_ids = []
        rows = []
        for row in reader:
            unit_ids.append(row[0])
            rows.append([float(v) for v in row[1:]])
    h_list: dict[int, int] = {}
    for l, h in labels:
        h_list[l] = max(h_list.get(l, 0), h)
    expected = column_labels([h_list[l] for l in sorted(h_list)])
    if labels != expected:
        raise EfclustError(f"{path}: unexpected column layout")
    return unit_ids, np.array(rows), tuple(h_list[l] for l in sorted(h_list))


def cmd_report(args) -> int:
    out = _out_dir(args)
    t0 = time.perf_counter()
    fit_dir = Path(args.fit_dir)
    rho_path = fit_dir / "rho.csv"
    summary_path = fit_dir / "summary.json"
    unit_ids, rho, h_list = _load_rho_csv(rho_path)
    g_hat, f_hat = map_assignments_from_rho(rho, h_list)

    occupied = sorted(set(g_hat))
    frequencies = {lab: 0 for lab in occupied}
    for lab in g_hat:
        frequencies[lab] += 1
    volumes = {}
    inputs = [rho_path]
    if summary_path.exists():
        inputs.append(summary_path)
        with open(summary_path) as fh:
            summary = json.load(fh)
        for entry in summary.get("occupied", []):
            if "volume" in entry:
                volumes[(entry["class"], entry["atom"])] = entry["volume"]

    doc = {
        "n_units": len(unit_ids),
        "n_occupied_clusters": len(occupied),
        "occupied": [
            {
                "class": l,
                "atom": h,
                "frequency": frequencies[(l, h)],
                **({"volume": volumes[(l, h)]} if (l, h) in volumes else {}),
            }
            for l, h in occupied
        ],
        "class_estimates": {
            uid: f for uid, f in zip(unit_ids, f_hat)
        },
        "cluster_estimates": {
            uid: {"class": g[0], "atom": g[1]} for uid, g in zip(unit_ids, g_hat)
        },
        "class_disagreements": [
            uid for uid, g, f in zip(unit_ids, g_hat, f_hat) if g[0] != f
        ],
    }

    if args.truth is not None:
        truth_path = Path(args.truth)
        inputs.append(truth_path)
        truth_by_id = {}
        with open(truth_path, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                truth_by_id[row["unit_id"]] = row["label"]
        missing = [uid for uid in unit_ids if uid not in truth_by_id]
        if missing:
            raise EfclustError(
                f"{truth_path}: no true label for units {missing[:5]}"
            )
        true_labels = [truth_by_id[uid] for uid in unit_ids]
        matrix, rows, cols = contingency_with_labels(true_labels, g_hat)
        accuracy = permutation_accuracy(true_labels, g_hat)
        doc["accuracy"] = accuracy
        with open(out / "contingency.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["true_label"] + [f"est_{l}_{h}" for l, h in cols])
            for lab, counts in zip(rows, matrix):
                writer.writerow([lab] + [int(c) for c in counts])
        with open(out / "accuracy.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["accuracy"])
            writer.writerow([_fmt(accuracy)])

    _write_json(out / "report.json", doc)
    _write_manifest(out, "report", None, None, inputs,
                    {"total": time.perf_counter() - t0})
    print(f"report: {len(occupied)} occupied clusters"
          + (f", accuracy {doc['accuracy']:.4f}" if "accuracy" in doc else ""))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="efclust",
        description="Cluster functional (time-series) observations with an "
        "enriched Dirichlet multinomial mixture fitted by variational inference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic benchmark dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenario", choices=["small", "high"], default=None,
                   help="bundled benchmark noise level")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--t-count", type=int, default=50)
    p.add_argument("--noise-variance", type=float, default=None)
    p.add_argument("--blocks", default="25,25,25,25",
                   help="comma-separated block sizes (with --noise-variance)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit the mixture to a dataset")
    p.add_argument("--config", required=True,
                   help=f"config file path or one of {BUILTIN_CONFIGS}")
    p.add_argument("--data", required=True, help="long-format CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--rel-tol", type=float, default=1e-6)
    p.add_argument("--max-sweeps", type=int, default=500)
    p.add_argument("--init", choices=["random_soft", "assign_prior_means"],
                   default="random_soft")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel restarts (results identical to --workers 1)")
    p.add_argument("--no-standardize", action="store_true",
                   help="fit the raw values instead of standardizing")
    p.add_argument("--progress", action="store_true",
                   help="stream per-sweep elbo values to stderr")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("prior-sample",
                       help="sample prior partitions and prior curves")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=100, help="partition size")
    p.add_argument("--curve-class", type=int, default=None,
                   help="also sample curves from this class (1-based)")
    p.add_argument("--curve-count", type=int, default=10)
    p.add_argument("--grid", default="0:1:101", help="curve grid lo:hi:num")
    p.set_defaults(func=cmd_prior_sample)

    p = sub.add_parser("report", help="summarize a saved fit directory")
    p.add_argument("--fit-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", default=None,
                   help="unit_id,label CSV with ground-truth clusters")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EfclustError as exc:
        print(f"efclust {args.command}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"efclust {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
