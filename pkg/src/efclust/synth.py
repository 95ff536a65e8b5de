"""Synthetic functional data: known true curves plus Gaussian noise.

The bundled benchmark uses four true curves observed on a common equally
spaced grid over (0, 1], in contiguous blocks of equal size, under a small
or a large noise variance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import ClassConfig, ModelConfig
from .basis import BasisSpec, Constant, Cosine, Power, Sine
from .dataset import FunctionalDataset, Unit
from .errors import DataFormatError


@dataclass(frozen=True)
class SimulationSpec:
    n: int
    t_count: int
    true_functions: tuple[Callable, ...]
    block_sizes: tuple[int, ...]
    noise_variance: float
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "true_functions", tuple(self.true_functions))
        object.__setattr__(self, "block_sizes", tuple(int(b) for b in self.block_sizes))
        if self.t_count < 1:
            raise DataFormatError("t_count must be >= 1")
        if sum(self.block_sizes) != self.n:
            raise DataFormatError(
                f"block sizes sum to {sum(self.block_sizes)}, expected n={self.n}"
            )
        if len(self.block_sizes) != len(self.true_functions):
            raise DataFormatError("need one true function per block")
        if self.noise_variance < 0:
            raise DataFormatError("noise_variance must be nonnegative")


def _line(t):
    return 1.0 - 2.0 * t


def _one_cycle(t):
    return 0.5 * (np.cos(2.0 * np.pi * t) + np.sin(2.0 * np.pi * t))


def _quartic(t):
    return 2.0 * t**4 - 1.0


def _two_cycle(t):
    return 0.5 * (np.cos(4.0 * np.pi * t) + np.sin(4.0 * np.pi * t))


def benchmark_truths() -> tuple[Callable, ...]:
    """The four true curves of the bundled benchmark: a decreasing line, a
    one-cycle harmonic, a quartic, and a two-cycle harmonic on [0, 1]."""
    return (_line, _one_cycle, _quartic, _two_cycle)


def generate(spec: SimulationSpec) -> tuple[FunctionalDataset, tuple[int, ...]]:
    """Sample the dataset and return it with the 1-based true block labels.

    Every unit shares the grid (1/T, ..., T/T). Unit i of block j observes
    f_j(t) + independent Gaussian noise; draws are a single seeded stream in
    unit order, so equal seeds give bit-identical datasets.
    """
    rng = np.random.default_rng(spec.seed)
    grid = np.arange(1, spec.t_count + 1) / spec.t_count
    sd = float(np.sqrt(spec.noise_variance))
    width = max(4, len(str(spec.n)))
    units = []
    labels = []
    unit_idx = 0
    for block, (size, fn) in enumerate(zip(spec.block_sizes, spec.true_functions),
                                       start=1):
        truth = np.asarray(fn(grid), dtype=np.float64)
        for _ in range(size):
            unit_idx += 1
            values = truth.copy()
            if sd > 0:
                values = values + sd * rng.standard_normal(spec.t_count)
            units.append(
                Unit(unit_id=f"u{unit_idx:0{width}d}", grid=grid, values=values)
            )
            labels.append(block)
    return FunctionalDataset(units=tuple(units)), tuple(labels)


BENCHMARK_NOISE = {"small": 0.01, "high": 2.25}


def benchmark_spec(scenario: str, seed: int, n: int = 100,
                   t_count: int = 50) -> SimulationSpec:
    """The bundled four-block benchmark in its small or high noise variant."""
    if scenario not in BENCHMARK_NOISE:
        raise DataFormatError(
            f"unknown scenario {scenario!r}; have {sorted(BENCHMARK_NOISE)}"
        )
    if n % 4 != 0:
        raise DataFormatError("benchmark n must be divisible by 4")
    block = n // 4
    return SimulationSpec(
        n=n,
        t_count=t_count,
        true_functions=benchmark_truths(),
        block_sizes=(block, block, block, block),
        noise_variance=BENCHMARK_NOISE[scenario],
        seed=seed,
    )


def benchmark_model_config(h_per_class: int = 5, coef_variance: float = 10.0,
                           ) -> ModelConfig:
    """Model matched to the benchmark truths: four classes with bases
    {1, t}, {1, cos 2 pi t, sin 2 pi t}, {1, t^4}, {1, cos 4 pi t, sin 4 pi t},
    iid Normal(0, coef_variance) coefficient priors, and unit concentration
    and noise hyperparameters."""
    two_pi = 2.0 * np.pi
    bases = (
        BasisSpec(terms=(Constant(), Power(1))),
        BasisSpec(terms=(Constant(), Cosine(two_pi), Sine(two_pi))),
        BasisSpec(terms=(Constant(), Power(4))),
        BasisSpec(terms=(Constant(), Cosine(2 * two_pi), Sine(2 * two_pi))),
    )
    classes = tuple(
        ClassConfig(
            alpha=1.0,
            c=1.0,
            h_max=h_per_class,
            basis=b,
            prior_mean=np.zeros(b.dimension),
            prior_cov=coef_variance * np.eye(b.dimension),
        )
        for b in bases
    )
    return ModelConfig(classes=classes, a_sigma=1.0, b_sigma=1.0)
