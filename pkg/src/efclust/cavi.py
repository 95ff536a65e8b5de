"""Coordinate-ascent variational inference for the enriched functional mixture.

The mean-field family factorizes over assignments, class weights, per-class
within weights, atom coefficients, and the noise precision. One sweep updates
the blocks in a fixed order:

  1. assignment probabilities rho (n x H, H = sum of per-class atom counts),
  2. the Dirichlet parameters of the class weights,
  3. the Dirichlet parameters of each class's within weights,
  4. the Gaussian parameters of every atom's coefficients,
  5. the Gamma parameters of the noise precision,

after which the evidence lower bound is recorded. Every update is the exact
conditionally conjugate optimum, so the bound never decreases.

Cross-unit reductions always run in a canonical order (units sorted by id),
which makes results exactly invariant to the order units appear in the data
and lets parallel restarts reproduce the sequential bits.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import digamma, gammaln

from .basis import DesignMatrix, build_design
from .config import ModelConfig, validate_config
from .dataset import FunctionalDataset
from .errors import (
    ConfigError,
    EfclustError,
    NonFiniteElboError,
    NonFiniteLogWeightError,
    SingularSystemError,
)

RHO_FLOOR = 1e-12
LOG_2PI = float(np.log(2.0 * np.pi))


def class_slices(h_list) -> list[slice]:
    """Column ranges of each class inside the flat (l, h) column layout."""
    out, start = [], 0
    for h in h_list:
        out.append(slice(start, start + h))
        start += h
    return out


def column_labels(h_list) -> list[tuple[int, int]]:
    """(class, atom) label of every flat column, both 1-based."""
    return [(l, h) for l, h_max in enumerate(h_list, start=1)
            for h in range(1, h_max + 1)]


@dataclass(frozen=True)
class FitOptions:
    max_sweeps: int = 500
    rel_tol: float = 1e-6
    restarts: int = 20
    seed: int = 0
    init: str = "random_soft"


@dataclass(frozen=True, eq=False)
class VariationalState:
    """All mean-field parameters plus the bound trace.

    ``rho`` rows sum to one; columns follow the flat (class, atom) layout.
    ``within_dirichlet``, ``atom_mean`` and ``atom_cov`` are per-class tuples
    with one leading atom axis each. The noise precision is Gamma(shape, rate).
    """

    rho: np.ndarray
    class_dirichlet: np.ndarray
    within_dirichlet: tuple[np.ndarray, ...]
    atom_mean: tuple[np.ndarray, ...]
    atom_cov: tuple[np.ndarray, ...]
    noise_shape: float
    noise_rate: float
    elbo_trace: tuple[float, ...] = ()

    @property
    def h_list(self) -> tuple[int, ...]:
        return tuple(len(w) for w in self.within_dirichlet)

    @property
    def expected_noise_precision(self) -> float:
        return self.noise_shape / self.noise_rate

    def atom(self, label: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
        """Variational (mean, covariance) of one atom, label 1-based."""
        l, h = label
        return self.atom_mean[l - 1][h - 1], self.atom_cov[l - 1][h - 1]


@dataclass(frozen=True)
class FitDiagnostics:
    best_restart: int
    final_elbos: tuple[float, ...]
    n_sweeps: tuple[int, ...]
    converged: tuple[bool, ...]
    traces: tuple[tuple[float, ...], ...]


class _ClassWorkspace:
    """Per-class sufficient statistics that never change during a fit."""

    def __init__(self, cls, design: DesignMatrix, y_blocks):
        n = design.n_units
        m = design.dimension
        self.design = design
        self.gram = np.empty((n, m, m))
        self.proj = np.empty((n, m))
        for i in range(n):
            b = design.block(i)
            self.gram[i] = b.T @ b
            self.proj[i] = b.T @ y_blocks[i]
        self.prior_mean = cls.prior_mean
        self.prior_cov = cls.prior_cov
        chol = np.linalg.cholesky(cls.prior_cov)
        identity = np.eye(m)
        self.prior_prec = cho_solve((chol, True), identity)
        self.prior_prec = 0.5 * (self.prior_prec + self.prior_prec.T)
        self.prior_prec_mean = self.prior_prec @ cls.prior_mean
        self.prior_logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))


class _Workspace:
    """Precomputed per-unit statistics shared by all update steps."""

    def __init__(self, data: FunctionalDataset, designs, cfg: ModelConfig):
        if len(designs) != cfg.n_classes:
            raise ConfigError(
                f"expected {cfg.n_classes} design matrices, got {len(designs)}"
            )
        self.n = data.n_units
        self.t_counts = np.array([u.n_points for u in data.units], dtype=np.int64)
        self.total_points = int(self.t_counts.sum())
        y_blocks = [u.values for u in data.units]
        self.yy = np.array([float(y @ y) for y in y_blocks])
        # canonical unit order: sorting by id makes cross-unit sums independent
        # of the order units were supplied in
        self.canon = np.argsort(np.array(data.unit_ids))
        self.classes = []
        for cls, design in zip(cfg.classes, designs):
            if design.n_units != self.n:
                raise ConfigError("design matrix does not match the dataset")
            if design.dimension != cls.dimension:
                raise ConfigError(
                    f"design has {design.dimension} columns, basis needs "
                    f"{cls.dimension}"
                )
            self.classes.append(_ClassWorkspace(cls, design, y_blocks))
        self.h_list = tuple(cls.h_max for cls in cfg.classes)
        self.slices = class_slices(self.h_list)

    def canon_sum(self, per_unit: np.ndarray) -> float:
        return float(per_unit[self.canon].sum())


def _workspace(data, designs, cfg, workspace=None) -> _Workspace:
    return workspace if workspace is not None else _Workspace(data, designs, cfg)


def expected_sq_residual(
    state: VariationalState, data: FunctionalDataset, designs, i: int, s: int,
    label: tuple[int, int],
) -> float:
    """E[(y_i(t_is) - theta(t_is))^2] for one atom: squared error at the
    variational mean plus the basis-row quadratic form of the covariance.

    ``i`` and ``s`` are 0-based indices; ``label`` is a 1-based (class, atom)
    pair.
    """
    mean, cov = state.atom(label)
    b = designs[label[0] - 1].block(i)[s]
    y = data.units[i].values[s]
    resid = y - b @ mean
    return float(resid * resid + b @ cov @ b)


def _residual_matrix(state: VariationalState, ws: _Workspace) -> np.ndarray:
    """Per-unit sums of expected squared residuals, shape (n, H).

    Uses the per-unit Gram blocks: sum_s E[(y - b'beta)^2] equals
    y'y - 2 mu'B'y + tr(G (cov + mu mu')).
    """
    n = ws.n
    out = np.empty((n, sum(ws.h_list)))
    for cw, sl, mean, cov in zip(ws.classes, ws.slices, state.atom_mean,
                                 state.atom_cov):
        second_moment = cov + np.einsum("hm,hk->hmk", mean, mean)
        quad = np.einsum("imk,hmk->ih", cw.gram, second_moment)
        cross = cw.proj @ mean.T
        out[:, sl] = ws.yy[:, None] - 2.0 * cross + quad
    np.clip(out, 0.0, None, out=out)
    return out


def _expected_log_weights(state: VariationalState) -> np.ndarray:
    """E[log Pi_l] + E[log pi_lh] for every flat column."""
    e_class = digamma(state.class_dirichlet) - digamma(state.class_dirichlet.sum())
    parts = []
    for l, w in enumerate(state.within_dirichlet):
        parts.append(e_class[l] + digamma(w) - digamma(w.sum()))
    return np.concatenate(parts)


def _update_responsibilities(state, ws: _Workspace) -> VariationalState:
    log_w = _expected_log_weights(state)[None, :] \
        - 0.5 * state.expected_noise_precision * _residual_matrix(state, ws)
    if not np.all(np.isfinite(log_w)):
        raise NonFiniteLogWeightError("non-finite assignment log-weight")
    log_w -= log_w.max(axis=1, keepdims=True)
    rho = np.exp(log_w)
    rho /= rho.sum(axis=1, keepdims=True)
    rho[rho < RHO_FLOOR] = 0.0
    rho /= rho.sum(axis=1, keepdims=True)
    return replace(state, rho=rho)


def _update_class_weights(state, ws: _Workspace, cfg: ModelConfig) -> VariationalState:
    rho_c = state.rho[ws.canon]
    counts = np.array([rho_c[:, sl].sum() for sl in ws.slices])
    return replace(state, class_dirichlet=cfg.alphas + counts)


def _update_within_weights(state, ws: _Workspace, cfg: ModelConfig) -> VariationalState:
    rho_c = state.rho[ws.canon]
    within = tuple(
        cls.c / cls.h_max + rho_c[:, sl].sum(axis=0)
        for cls, sl in zip(cfg.classes, ws.slices)
    )
    return replace(state, within_dirichlet=within)


def _update_atoms(state, ws: _Workspace, cfg: ModelConfig) -> VariationalState:
    e_tau = state.expected_noise_precision
    means, covs = [], []
    for cw, sl, cls in zip(ws.classes, ws.slices, cfg.classes):
        rho_c = state.rho[ws.canon][:, sl]
        gram_c = cw.gram[ws.canon]
        proj_c = cw.proj[ws.canon]
        m = cls.dimension
        weighted_gram = np.einsum("ih,imk->hmk", rho_c, gram_c)
        weighted_proj = rho_c.T @ proj_c
        mean_block = np.empty((cls.h_max, m))
        cov_block = np.empty((cls.h_max, m, m))
        identity = np.eye(m)
        for h in range(cls.h_max):
            precision = e_tau * weighted_gram[h] + cw.prior_prec
            rhs = e_tau * weighted_proj[h] + cw.prior_prec_mean
            try:
                factor = cho_factor(precision, lower=True)
            except np.linalg.LinAlgError as exc:
                raise SingularSystemError(
                    f"atom precision matrix not factorizable: {exc}"
                ) from None
            cov = cho_solve(factor, identity)
            cov_block[h] = 0.5 * (cov + cov.T)
            mean_block[h] = cho_solve(factor, rhs)
        means.append(mean_block)
        covs.append(cov_block)
    return replace(state, atom_mean=tuple(means), atom_cov=tuple(covs))


def _weighted_residual_per_unit(state, residuals: np.ndarray) -> np.ndarray:
    return np.einsum("ih,ih->i", state.rho, residuals)


def _update_noise(state, ws: _Workspace, cfg: ModelConfig,
                  residuals: np.ndarray | None = None) -> VariationalState:
    if residuals is None:
        residuals = _residual_matrix(state, ws)
    shape = cfg.a_sigma + 0.5 * ws.total_points
    rate = cfg.b_sigma + 0.5 * ws.canon_sum(
        _weighted_residual_per_unit(state, residuals)
    )
    return replace(state, noise_shape=float(shape), noise_rate=float(rate))


def _dirichlet_entropy(a: np.ndarray) -> float:
    a0 = a.sum()
    return float(
        gammaln(a).sum() - gammaln(a0)
        + (a0 - len(a)) * digamma(a0)
        - ((a - 1.0) * digamma(a)).sum()
    )


def _elbo_terms(state, ws: _Workspace, cfg: ModelConfig,
                residuals: np.ndarray | None = None) -> dict[str, float]:
    if residuals is None:
        residuals = _residual_matrix(state, ws)
    e_tau = state.expected_noise_precision
    e_log_tau = float(digamma(state.noise_shape) - np.log(state.noise_rate))
    terms: dict[str, float] = {}

    total_weighted = ws.canon_sum(_weighted_residual_per_unit(state, residuals))
    terms["likelihood"] = (
        0.5 * ws.total_points * (e_log_tau - LOG_2PI) - 0.5 * e_tau * total_weighted
    )

    log_w = _expected_log_weights(state)
    terms["assignment_cross"] = ws.canon_sum(state.rho @ log_w)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(state.rho > 0.0, state.rho * np.log(state.rho), 0.0)
    terms["assignment_entropy"] = -ws.canon_sum(plogp.sum(axis=1))

    alphas = cfg.alphas
    e_log_class = digamma(state.class_dirichlet) - digamma(state.class_dirichlet.sum())
    terms["class_prior"] = float(
        gammaln(alphas.sum()) - gammaln(alphas).sum()
        + ((alphas - 1.0) * e_log_class).sum()
    )
    terms["class_entropy"] = _dirichlet_entropy(state.class_dirichlet)

    within_prior = 0.0
    within_entropy = 0.0
    for cls, w in zip(cfg.classes, state.within_dirichlet):
        conc = cls.c / cls.h_max
        e_log_within = digamma(w) - digamma(w.sum())
        within_prior += float(
            gammaln(cls.c) - cls.h_max * gammaln(conc)
            + ((conc - 1.0) * e_log_within).sum()
        )
        within_entropy += _dirichlet_entropy(w)
    terms["within_prior"] = within_prior
    terms["within_entropy"] = within_entropy

    atom_prior = 0.0
    atom_entropy = 0.0
    for cw, cls, mean, cov in zip(ws.classes, cfg.classes, state.atom_mean,
                                  state.atom_cov):
        m = cls.dimension
        for h in range(cls.h_max):
            diff = mean[h] - cw.prior_mean
            atom_prior += float(
                -0.5 * m * LOG_2PI - 0.5 * cw.prior_logdet
                - 0.5 * (np.trace(cw.prior_prec @ cov[h]) + diff @ cw.prior_prec @ diff)
            )
            sign, logdet = np.linalg.slogdet(cov[h])
            if sign <= 0:
                raise NonFiniteElboError("atom covariance is not positive-definite")
            atom_entropy += float(0.5 * m * (1.0 + LOG_2PI) + 0.5 * logdet)
    terms["atom_prior"] = atom_prior
    terms["atom_entropy"] = atom_entropy

    terms["noise_prior"] = float(
        cfg.a_sigma * np.log(cfg.b_sigma) - gammaln(cfg.a_sigma)
        + (cfg.a_sigma - 1.0) * e_log_tau - cfg.b_sigma * e_tau
    )
    terms["noise_entropy"] = float(
        state.noise_shape - np.log(state.noise_rate) + gammaln(state.noise_shape)
        + (1.0 - state.noise_shape) * digamma(state.noise_shape)
    )
    return terms


def update_responsibilities(state, data, designs, cfg, workspace=None):
    """Sweep step 1: refresh every unit's assignment probabilities."""
    return _update_responsibilities(state, _workspace(data, designs, cfg, workspace))


def update_class_weights(state, data, designs, cfg, workspace=None):
    """Sweep step 2: class Dirichlet parameters alpha_l + soft class counts."""
    return _update_class_weights(state, _workspace(data, designs, cfg, workspace), cfg)


def update_within_weights(state, data, designs, cfg, workspace=None):
    """Sweep step 3: within Dirichlet parameters c_l/h_max + soft atom counts."""
    return _update_within_weights(state, _workspace(data, designs, cfg, workspace), cfg)


def update_atoms(state, data, designs, cfg, workspace=None):
    """Sweep step 4: Gaussian atom updates via responsibility-weighted
    least squares against the coefficient prior."""
    return _update_atoms(state, _workspace(data, designs, cfg, workspace), cfg)


def update_noise(state, data, designs, cfg, workspace=None):
    """Sweep step 5: Gamma noise-precision update from weighted residuals."""
    return _update_noise(state, _workspace(data, designs, cfg, workspace), cfg)


def elbo_terms(state, data, designs, cfg, workspace=None) -> dict[str, float]:
    """The additive pieces of the bound, each a separate expectation."""
    return _elbo_terms(state, _workspace(data, designs, cfg, workspace), cfg)


def compute_elbo(state, data, designs, cfg, workspace=None) -> float:
    value = float(sum(elbo_terms(state, data, designs, cfg, workspace).values()))
    if not np.isfinite(value):
        raise NonFiniteElboError(f"elbo evaluated to {value}")
    return value


def initial_state(cfg: ModelConfig, n_units: int, rng: np.random.Generator,
                  init: str = "random_soft") -> VariationalState:
    """Pre-sweep state: prior weights, prior atoms, prior-mean noise, and
    either random soft assignments or uniform ones."""
    h_total = cfg.h_total
    if init == "random_soft":
        rho = rng.dirichlet(np.ones(h_total), size=n_units)
    elif init == "assign_prior_means":
        rho = np.full((n_units, h_total), 1.0 / h_total)
    else:
        raise ConfigError(f"unknown init {init!r}")
    return VariationalState(
        rho=rho,
        class_dirichlet=cfg.alphas.copy(),
        within_dirichlet=tuple(
            np.full(cls.h_max, cls.c / cls.h_max) for cls in cfg.classes
        ),
        atom_mean=tuple(
            np.tile(cls.prior_mean, (cls.h_max, 1)) for cls in cfg.classes
        ),
        atom_cov=tuple(
            np.tile(cls.prior_cov, (cls.h_max, 1, 1)) for cls in cfg.classes
        ),
        noise_shape=cfg.a_sigma,
        noise_rate=cfg.b_sigma,
    )


def _run_restart(ws: _Workspace, cfg: ModelConfig, opts: FitOptions,
                 seed_seq, restart: int, progress=None):
    rng = np.random.default_rng(seed_seq)
    state = initial_state(cfg, ws.n, rng, opts.init)
    # propagate the initial assignments through steps 2-5 so the first full
    # sweep starts from a coherent state
    state = _update_class_weights(state, ws, cfg)
    state = _update_within_weights(state, ws, cfg)
    state = _update_atoms(state, ws, cfg)
    state = _update_noise(state, ws, cfg)

    converged = False
    for sweep in range(1, opts.max_sweeps + 1):
        state = _update_responsibilities(state, ws)
        state = _update_class_weights(state, ws, cfg)
        state = _update_within_weights(state, ws, cfg)
        state = _update_atoms(state, ws, cfg)
        residuals = _residual_matrix(state, ws)
        state = _update_noise(state, ws, cfg, residuals)
        elbo = float(sum(_elbo_terms(state, ws, cfg, residuals).values()))
        if not np.isfinite(elbo):
            raise NonFiniteElboError(f"elbo evaluated to {elbo}")
        state = replace(state, elbo_trace=state.elbo_trace + (elbo,))
        if progress is not None:
            progress(restart, sweep, elbo)
        if len(state.elbo_trace) >= 2:
            prev = state.elbo_trace[-2]
            denom = abs(prev) if prev != 0.0 else 1.0
            if abs(elbo - prev) < opts.rel_tol * denom:
                converged = True
                break
    return state, converged


def fit(
    data: FunctionalDataset,
    cfg: ModelConfig,
    opts: FitOptions = FitOptions(),
    progress=None,
    workers: int = 1,
) -> tuple[VariationalState, FitDiagnostics]:
    """Run multi-restart CAVI and keep the restart with the highest bound.

    Restart r uses the r-th child of SeedSequence(opts.seed), so results are
    reproducible and independent of ``workers``. Ties on the final bound go to
    the lowest restart index.
    """
    validate_config(cfg)
    if opts.max_sweeps < 1 or opts.restarts < 1:
        raise ConfigError("max_sweeps and restarts must be >= 1")
    if opts.rel_tol < 0:
        raise ConfigError("rel_tol must be nonnegative")
    if not data.standardized:
        warnings.warn(
            "fitting unstandardized data; the model assumes per-unit mean 0 "
            "and variance 1",
            stacklevel=2,
        )
    designs = tuple(build_design(cls.basis, data) for cls in cfg.classes)
    ws = _Workspace(data, designs, cfg)
    seeds = np.random.SeedSequence(opts.seed).spawn(opts.restarts)

    def run(r: int):
        try:
            return _run_restart(ws, cfg, opts, seeds[r], r, progress)
        except EfclustError as exc:
            exc.args = (f"restart {r}: {exc}",) + exc.args[1:]
            raise

    if workers > 1 and opts.restarts > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(opts.restarts)))
    else:
        results = [run(r) for r in range(opts.restarts)]

    finals = tuple(st.elbo_trace[-1] for st, _ in results)
    best = max(range(opts.restarts), key=lambda r: (finals[r], -r))
    diagnostics = FitDiagnostics(
        best_restart=best,
        final_elbos=finals,
        n_sweeps=tuple(len(st.elbo_trace) for st, _ in results),
        converged=tuple(conv for _, conv in results),
        traces=tuple(st.elbo_trace for st, _ in results),
    )
    return results[best][0], diagnostics
