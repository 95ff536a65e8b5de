"""Functional observations: ragged per-unit time grids and values.

A dataset is an ordered collection of units. Each unit carries its own
strictly increasing time grid, the observed values on that grid, and an
optional nonnegative volume used only for reporting (it never enters the
likelihood).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataFormatError, TooShortError, ZeroVarianceError

MEAN_TOL = 1e-10
VAR_TOL = 1e-8


def _frozen_array(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DataFormatError(f"{name} must be one-dimensional")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Unit:
    """One functional observation on its own time grid."""

    unit_id: str
    grid: np.ndarray
    values: np.ndarray
    volume: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "grid", _frozen_array(self.grid, "grid"))
        object.__setattr__(self, "values", _frozen_array(self.values, "values"))
        if len(self.grid) != len(self.values):
            raise DataFormatError(
                f"unit {self.unit_id!r}: grid has {len(self.grid)} points "
                f"but values has {len(self.values)}"
            )
        if len(self.grid) < 1:
            raise DataFormatError(f"unit {self.unit_id!r} is empty")
        if np.any(np.diff(self.grid) <= 0):
            raise DataFormatError(
                f"unit {self.unit_id!r}: grid must be strictly increasing"
            )
        if not np.all(np.isfinite(self.grid)) or not np.all(np.isfinite(self.values)):
            raise DataFormatError(f"unit {self.unit_id!r}: non-finite entries")
        if self.volume is not None:
            vol = float(self.volume)
            if vol < 0 or not np.isfinite(vol):
                raise DataFormatError(
                    f"unit {self.unit_id!r}: volume must be nonnegative"
                )
            object.__setattr__(self, "volume", vol)

    @property
    def n_points(self) -> int:
        return len(self.grid)


@dataclass(frozen=True)
class FunctionalDataset:
    """Ordered, immutable collection of units.

    ``standardized`` asserts that every unit has empirical mean 0 and
    empirical variance 1 (population convention); it is checked at
    construction time.
    """

    units: tuple[Unit, ...]
    standardized: bool = False

    def __post_init__(self):
        units = tuple(self.units)
        object.__setattr__(self, "units", units)
        if len(units) == 0:
            raise DataFormatError("dataset has no units")
        ids = [u.unit_id for u in units]
        if len(set(ids)) != len(ids):
            raise DataFormatError("unit ids must be unique")
        if self.standardized:
            for u in units:
                if abs(float(np.mean(u.values))) > MEAN_TOL:
                    raise DataFormatError(
                        f"unit {u.unit_id!r} claims standardized but mean is not 0"
                    )
                if abs(float(np.var(u.values)) - 1.0) > VAR_TOL:
                    raise DataFormatError(
                        f"unit {u.unit_id!r} claims standardized but variance is not 1"
                    )

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def unit_ids(self) -> tuple[str, ...]:
        return tuple(u.unit_id for u in self.units)

    @property
    def total_points(self) -> int:
        return sum(u.n_points for u in self.units)

    @property
    def has_volumes(self) -> bool:
        return all(u.volume is not None for u in self.units)

    def time_range(self) -> tuple[float, float]:
        lo = min(float(u.grid[0]) for u in self.units)
        hi = max(float(u.grid[-1]) for u in self.units)
        return lo, hi


def standardize(raw: FunctionalDataset) -> FunctionalDataset:
    """Center and rescale every unit to mean 0, variance 1.

    The variance divisor is the population one (1/T per unit). Grids, unit
    order, ids, and volumes are preserved exactly. Units with fewer than 2
    points or with constant values are rejected.
    """
    out = []
    for u in raw.units:
        if u.n_points < 2:
            raise TooShortError(u.unit_id)
        if np.max(u.values) == np.min(u.values):
            raise ZeroVarianceError(u.unit_id)
        mean = np.mean(u.values)
        sd = np.sqrt(np.var(u.values))
        out.append(replace(u, values=(u.values - mean) / sd))
    return FunctionalDataset(units=tuple(out), standardized=True)


def load_dataset_csv(path) -> FunctionalDataset:
    """Read a long-format CSV with header ``unit_id,time,value[,volume]``.

    Rows may appear in any order; they are grouped by unit (first-appearance
    order preserved) and sorted by time within each unit. When the volume
    column is present it must be filled on every row and constant per unit.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataFormatError(f"{path}: empty file")
        cols = [c.strip() for c in reader.fieldnames]
        for required in ("unit_id", "time", "value"):
            if required not in cols:
                raise DataFormatError(f"{path}: missing column {required!r}")
        has_volume = "volume" in cols
        rows_by_unit: dict[str, list[tuple[float, float]]] = {}
        volumes: dict[str, float] = {}
        for lineno, row in enumerate(reader, start=2):
            uid = row["unit_id"]
            if uid is None or uid == "":
                raise DataFormatError(f"{path}:{lineno}: empty unit_id")
            try:
                t = float(row["time"])
                v = float(row["value"])
            except (TypeError, ValueError) as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            rows_by_unit.setdefault(uid, []).append((t, v))
            if has_volume:
                raw_vol = row.get("volume")
                if raw_vol is None or raw_vol == "":
                    raise DataFormatError(
                        f"{path}:{lineno}: volume column present but empty"
                    )
                vol = float(raw_vol)
                if uid in volumes and volumes[uid] != vol:
                    raise DataFormatError(
                        f"{path}:{lineno}: volume of unit {uid!r} is not constant"
                    )
                volumes[uid] = vol
    if not rows_by_unit:
        raise DataFormatError(f"{path}: no data rows")
    units = []
    for uid, pairs in rows_by_unit.items():
        pairs.sort(key=lambda p: p[0])
        grid = [p[0] for p in pairs]
        values = [p[1] for p in pairs]
        if len(set(grid)) != len(grid):
            raise DataFormatError(f"{path}: unit {uid!r} has duplicated time points")
        units.append(
            Unit(
                unit_id=uid,
                grid=np.array(grid),
                values=np.array(values),
                volume=volumes.get(uid) if has_volume else None,
            )
        )
    return FunctionalDataset(units=tuple(units))


def write_dataset_csv(data: FunctionalDataset, path) -> None:
    """Write a dataset in the long CSV format accepted by load_dataset_csv."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["unit_id", "time", "value"]
        if data.has_volumes:
            header.append("volume")
        writer.writerow(header)
        for u in data.units:
            for t, v in zip(u.grid, u.values):
                row = [u.unit_id, repr(float(t)), repr(float(v))]
                if data.has_volumes:
                    row.append(repr(float(u.volume)))
                writer.writerow(row)
