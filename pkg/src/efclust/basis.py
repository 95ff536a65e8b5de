"""Basis systems for cluster-specific curves and their design matrices.

Each functional class declares an ordered list of basis terms. Scalar terms
(constant, power, cosine, sine) contribute one column each; a B-spline block
contributes ``count`` columns. A curve is then a linear combination of the
evaluated columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .dataset import FunctionalDataset
from .errors import DataFormatError, OutOfSupportError


@dataclass(frozen=True)
class Constant:
    kind = "constant"

    @property
    def dimension(self) -> int:
        return 1


@dataclass(frozen=True)
class Power:
    exponent: int
    kind = "power"

    def __post_init__(self):
        if int(self.exponent) != self.exponent or self.exponent < 0:
            raise DataFormatError("power exponent must be a nonnegative integer")
        object.__setattr__(self, "exponent", int(self.exponent))

    @property
    def dimension(self) -> int:
        return 1


@dataclass(frozen=True)
class Cosine:
    """cos(angular_rate * t)."""

    angular_rate: float
    kind = "cosine"

    def __post_init__(self):
        if not self.angular_rate > 0:
            raise DataFormatError("angular_rate must be positive")
        object.__setattr__(self, "angular_rate", float(self.angular_rate))

    @property
    def dimension(self) -> int:
        return 1


@dataclass(frozen=True)
class Sine:
    """sin(angular_rate * t)."""

    angular_rate: float
    kind = "sine"

    def __post_init__(self):
        if not self.angular_rate > 0:
            raise DataFormatError("angular_rate must be positive")
        object.__setattr__(self, "angular_rate", float(self.angular_rate))

    @property
    def dimension(self) -> int:
        return 1


@dataclass(frozen=True)
class BSplineBlock:
    """A block of ``count`` B-spline columns on [t_min, t_max].

    The knot vector is clamped: boundary knots repeated degree+1 times with
    the interior knots in between, so count = len(interior_knots) + degree + 1.
    Evaluation outside the boundary is an error, never extrapolation.
    """

    degree: int
    interior_knots: tuple[float, ...]
    boundary: tuple[float, float]
    count: int

    kind = "bspline"

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 0:
            raise DataFormatError("spline degree must be a nonnegative integer")
        object.__setattr__(self, "degree", int(self.degree))
        knots = tuple(float(k) for k in self.interior_knots)
        object.__setattr__(self, "interior_knots", knots)
        lo, hi = (float(self.boundary[0]), float(self.boundary[1]))
        if not lo < hi:
            raise DataFormatError("spline boundary must satisfy t_min < t_max")
        object.__setattr__(self, "boundary", (lo, hi))
        if any(k2 <= k1 for k1, k2 in zip(knots, knots[1:])):
            raise DataFormatError("interior knots must be strictly increasing")
        if knots and (knots[0] <= lo or knots[-1] >= hi):
            raise DataFormatError("interior knots must lie strictly inside the boundary")
        expected = len(knots) + self.degree + 1
        if self.count != expected:
            raise DataFormatError(
                f"bspline count must be interior_knots + degree + 1 = {expected}, "
                f"got {self.count}"
            )

    @property
    def dimension(self) -> int:
        return self.count

    def knot_vector(self) -> np.ndarray:
        lo, hi = self.boundary
        return np.concatenate(
            [
                np.full(self.degree + 1, lo),
                np.asarray(self.interior_knots, dtype=np.float64),
                np.full(self.degree + 1, hi),
            ]
        )


BasisTerm = Constant | Power | Cosine | Sine | BSplineBlock


@dataclass(frozen=True)
class BasisSpec:
    """Ordered basis terms; total dimension is the number of scalar columns."""

    terms: tuple[BasisTerm, ...]

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise DataFormatError("basis must have at least one term")
        object.__setattr__(self, "terms", terms)

    @property
    def dimension(self) -> int:
        return sum(term.dimension for term in self.terms)


def _evaluate_grid(spec: BasisSpec, t: np.ndarray) -> np.ndarray:
    """Evaluate all basis columns on a 1-d array of time points."""
    t = np.asarray(t, dtype=np.float64)
    columns = []
    for term in spec.terms:
        if isinstance(term, Constant):
            columns.append(np.ones_like(t))
        elif isinstance(term, Power):
            columns.append(t**term.exponent)
        elif isinstance(term, Cosine):
            columns.append(np.cos(term.angular_rate * t))
        elif isinstance(term, Sine):
            columns.append(np.sin(term.angular_rate * t))
        elif isinstance(term, BSplineBlock):
            lo, hi = term.boundary
            bad = (t < lo) | (t > hi)
            if np.any(bad):
                raise OutOfSupportError(float(t[bad][0]), f"support is [{lo}, {hi}]")
            spl = BSpline(term.knot_vector(), np.eye(term.count), term.degree,
                          extrapolate=False)
            columns.append(spl(t))
        else:  # pragma: no cover
            raise TypeError(f"unknown basis term {term!r}")
    return np.column_stack(columns)


def evaluate_basis(spec: BasisSpec, t: float) -> np.ndarray:
    """Evaluate every basis column at a single time point, in term order."""
    return _evaluate_grid(spec, np.array([float(t)]))[0]


@dataclass(frozen=True)
class DesignMatrix:
    """Per-unit basis evaluations plus the stacked form.

    Row s of unit i is the basis evaluated at that unit's s-th time point;
    the stacked matrix concatenates the unit blocks in dataset order, matching
    the stacked observation vector.
    """

    stacked: np.ndarray
    offsets: np.ndarray  # length n_units + 1; unit i occupies rows offsets[i]:offsets[i+1]

    def __post_init__(self):
        stacked = np.asarray(self.stacked, dtype=np.float64)
        stacked.flags.writeable = False
        object.__setattr__(self, "stacked", stacked)
        offsets = np.asarray(self.offsets, dtype=np.int64)
        offsets.flags.writeable = False
        object.__setattr__(self, "offsets", offsets)

    @property
    def n_units(self) -> int:
        return len(self.offsets) - 1

    @property
    def dimension(self) -> int:
        return self.stacked.shape[1]

    def block(self, i: int) -> np.ndarray:
        return self.stacked[self.offsets[i]:self.offsets[i + 1]]

    @property
    def blocks(self) -> tuple[np.ndarray, ...]:
        return tuple(self.block(i) for i in range(self.n_units))


def build_design(spec: BasisSpec, data: FunctionalDataset) -> DesignMatrix:
    """Evaluate the basis on every unit's grid and stack the blocks."""
    blocks = []
    for u in data.units:
        try:
            blocks.append(_evaluate_grid(spec, u.grid))
        except OutOfSupportError as exc:
            raise OutOfSupportError(exc.t, f"unit {u.unit_id!r}") from None
    offsets = np.zeros(len(blocks) + 1, dtype=np.int64)
    np.cumsum([b.shape[0] for b in blocks], out=offsets[1:])
    return DesignMatrix(stacked=np.vstack(blocks), offsets=offsets)


WEEKS_PER_YEAR = 365.0 / 7.0
WEEKLY_BOUNDARY = (1.0, 55.0)


def _spline_plus_harmonic(m_spline: int, period: float,
                          boundary: tuple[float, float]) -> BasisSpec:
    if m_spline < 4:
        raise DataFormatError("need at least 4 columns for a cubic spline block")
    n_interior = m_spline - 4
    lo, hi = boundary
    interior = tuple(np.linspace(lo, hi, n_interior + 2)[1:-1]) if n_interior else ()
    rate = 2.0 * np.pi / period
    return BasisSpec(
        terms=(
            BSplineBlock(degree=3, interior_knots=interior, boundary=boundary,
                         count=m_spline),
            Cosine(rate),
            Sine(rate),
        )
    )


def preset_p1(m_spline: int = 4, period_weeks: float = WEEKS_PER_YEAR,
              boundary: tuple[float, float] = WEEKLY_BOUNDARY) -> BasisSpec:
    """Cubic-spline block plus one harmonic with a one-year default period.

    Suits weekly series with a single seasonal peak. The default boundary
    covers a 55-week observation window starting at week 1.
    """
    return _spline_plus_harmonic(m_spline, period_weeks, boundary)


def preset_p2(m_spline: int = 4, period_weeks: float = WEEKS_PER_YEAR / 2.0,
              boundary: tuple[float, float] = WEEKLY_BOUNDARY) -> BasisSpec:
    """Same spline block as preset_p1 plus a half-year-period harmonic.

    Suits weekly series with two seasonal peaks per year.
    """
    return _spline_plus_harmonic(m_spline, period_weeks, boundary)


_TERM_KINDS = {
    "constant": Constant,
    "power": Power,
    "cosine": Cosine,
    "sine": Sine,
    "bspline": BSplineBlock,
}


def term_to_dict(term: BasisTerm) -> dict:
    if isinstance(term, Constant):
        return {"kind": "constant"}
    if isinstance(term, Power):
        return {"kind": "power", "exponent": term.exponent}
    if isinstance(term, (Cosine, Sine)):
        return {"kind": term.kind, "angular_rate": term.angular_rate}
    if isinstance(term, BSplineBlock):
        return {
            "kind": "bspline",
            "degree": term.degree,
            "interior_knots": list(term.interior_knots),
            "boundary": list(term.boundary),
            "count": term.count,
        }
    raise TypeError(f"unknown basis term {term!r}")


def term_from_dict(d: dict) -> BasisTerm:
    kind = d.get("kind")
    if kind == "constant":
        return Constant()
    if kind == "power":
        return Power(exponent=d["exponent"])
    if kind == "cosine":
        return Cosine(angular_rate=d["angular_rate"])
    if kind == "sine":
        return Sine(angular_rate=d["angular_rate"])
    if kind == "bspline":
        return BSplineBlock(
            degree=d["degree"],
            interior_knots=tuple(d["interior_knots"]),
            boundary=(d["boundary"][0], d["boundary"][1]),
            count=d["count"],
        )
    raise DataFormatError(f"unknown basis term kind {kind!r}")


def spec_to_dict(spec: BasisSpec) -> dict:
    return {"terms": [term_to_dict(t) for t in spec.terms]}


def spec_from_dict(d: dict) -> BasisSpec:
    return BasisSpec(terms=tuple(term_from_dict(t) for t in d["terms"]))
