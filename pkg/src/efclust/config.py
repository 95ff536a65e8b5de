"""Model configuration: per-class priors and the noise prior.

A model has L functional classes. Class l carries a class-weight
concentration alpha_l, a within-class total mass c_l, an upper bound h_max
on its number of clusters, a basis, and a Gaussian prior (mean, covariance)
on the basis coefficients. The noise precision has a Gamma(a_sigma, b_sigma)
prior (shape/rate).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import basis as basis_mod
from .basis import BasisSpec
from .errors import ConfigError, DimensionMismatchError, NotPositiveDefiniteError


def _frozen_matrix(x) -> np.ndarray:
    arr = np.array(x, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ClassConfig:
    alpha: float
    c: float
    h_max: int
    basis: BasisSpec
    prior_mean: np.ndarray
    prior_cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "h_max", int(self.h_max))
        object.__setattr__(self, "prior_mean", _frozen_matrix(self.prior_mean))
        object.__setattr__(self, "prior_cov", _frozen_matrix(self.prior_cov))

    @property
    def dimension(self) -> int:
        return self.basis.dimension


@dataclass(frozen=True, eq=False)
class ModelConfig:
    classes: tuple[ClassConfig, ...]
    a_sigma: float
    b_sigma: float

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "a_sigma", float(self.a_sigma))
        object.__setattr__(self, "b_sigma", float(self.b_sigma))

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def h_total(self) -> int:
        return sum(c.h_max for c in self.classes)

    @property
    def alphas(self) -> np.ndarray:
        return np.array([c.alpha for c in self.classes])

    @property
    def alpha_total(self) -> float:
        return float(sum(c.alpha for c in self.classes))


def validate_config(cfg: ModelConfig) -> None:
    """Raise ConfigError naming the first violated invariant and its class."""
    if cfg.n_classes < 1:
        raise ConfigError("model must have at least one class")
    for idx, cls in enumerate(cfg.classes, start=1):
        if not cls.alpha > 0:
            raise ConfigError(f"class {idx}: alpha must be positive, got {cls.alpha}")
        if not cls.c > 0:
            raise ConfigError(f"class {idx}: c must be positive, got {cls.c}")
        if cls.h_max < 1:
            raise ConfigError(f"class {idx}: h_max must be >= 1, got {cls.h_max}")
        m = cls.dimension
        if cls.prior_mean.ndim != 1 or len(cls.prior_mean) != m:
            raise DimensionMismatchError(idx, m, int(np.size(cls.prior_mean)))
        if cls.prior_cov.shape != (m, m):
            raise ConfigError(
                f"class {idx}: prior_cov must be {m}x{m}, got {cls.prior_cov.shape}"
            )
        if not np.allclose(cls.prior_cov, cls.prior_cov.T, rtol=0, atol=1e-12):
            raise NotPositiveDefiniteError(idx)
        try:
            np.linalg.cholesky(cls.prior_cov)
        except np.linalg.LinAlgError:
            raise NotPositiveDefiniteError(idx) from None
    if not cfg.a_sigma > 0 or not cfg.b_sigma > 0:
        raise ConfigError("a_sigma and b_sigma must be positive")


def config_to_dict(cfg: ModelConfig) -> dict:
    return {
        "classes": [
            {
                "alpha": cls.alpha,
                "c": cls.c,
                "h_max": cls.h_max,
                "basis": basis_mod.spec_to_dict(cls.basis),
                "prior_mean": cls.prior_mean.tolist(),
                "prior_cov": cls.prior_cov.tolist(),
            }
            for cls in cfg.classes
        ],
        "a_sigma": cfg.a_sigma,
        "b_sigma": cfg.b_sigma,
    }


def config_from_dict(d: dict) -> ModelConfig:
    try:
        classes = tuple(
            ClassConfig(
                alpha=c["alpha"],
                c=c["c"],
                h_max=c["h_max"],
                basis=basis_mod.spec_from_dict(c["basis"]),
                prior_mean=c["prior_mean"],
                prior_cov=c["prior_cov"],
            )
            for c in d["classes"]
        )
        return ModelConfig(classes=classes, a_sigma=d["a_sigma"], b_sigma=d["b_sigma"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed config document: {exc}") from None


def save_config(cfg: ModelConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path) -> ModelConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(doc)


BUILTIN_CONFIGS = ("benchmark", "weekly-routes")


def builtin_config(name: str) -> ModelConfig:
    """Load one of the configuration documents shipped with the package.

    ``benchmark``: four classes (line, one-cycle harmonic, quartic, two-cycle
    harmonic) with 5 atoms each, used by the bundled simulation study.
    ``weekly-routes``: two seasonal classes over a 55-week window built from
    preset_p1/preset_p2, a template for weekly search-volume data.
    """
    if name not in BUILTIN_CONFIGS:
        raise ConfigError(f"unknown builtin config {name!r}; have {BUILTIN_CONFIGS}")
    ref = resources.files("efclust.configs").joinpath(f"{name}.json")
    with resources.as_file(ref) as path:
        return load_config(path)
