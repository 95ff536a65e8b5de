"""The enriched urn process behind the prior partition law.

Cluster labels are generated in two steps: a class indicator drawn from the
class urn, then a within-class cluster drawn from that class's urn, which
either reuses an existing cluster or opens a new one as long as fewer than
h_max clusters are occupied. Class labels l and within-class labels j are
1-based throughout the public API.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import _evaluate_grid
from .config import ModelConfig, validate_config
from .errors import InconsistentStateError


@dataclass(frozen=True)
class UrnState:
    """Occupancy counts of the sequential urn.

    ``clusters[l]`` lists (atom_id, size) pairs for class l+1 in order of
    appearance; ``class_counts[l]`` is the number of units in that class.
    """

    class_counts: tuple[int, ...]
    clusters: tuple[tuple[tuple[int, int], ...], ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.class_counts)
        clusters = tuple(tuple((int(a), int(s)) for a, s in cl) for cl in self.clusters)
        object.__setattr__(self, "class_counts", counts)
        object.__setattr__(self, "clusters", clusters)
        if len(counts) != len(clusters):
            raise InconsistentStateError("class_counts and clusters disagree on L")
        for l, (n_l, cl) in enumerate(zip(counts, clusters), start=1):
            if n_l < 0 or any(s <= 0 for _, s in cl):
                raise InconsistentStateError(f"class {l}: negative or empty cluster")
            if sum(s for _, s in cl) != n_l:
                raise InconsistentStateError(
                    f"class {l}: cluster sizes sum to {sum(s for _, s in cl)}, "
                    f"expected {n_l}"
                )

    @property
    def n_total(self) -> int:
        return sum(self.class_counts)

    def k(self, class_label: int) -> int:
        """Number of occupied clusters in a class (1-based label)."""
        return len(self.clusters[class_label - 1])


def empty_urn(cfg: ModelConfig) -> UrnState:
    L = cfg.n_classes
    return UrnState(class_counts=(0,) * L, clusters=((),) * L)


def _check_state(state: UrnState, cfg: ModelConfig) -> None:
    if len(state.class_counts) != cfg.n_classes:
        raise InconsistentStateError(
            f"state has {len(state.class_counts)} classes, config has {cfg.n_classes}"
        )
    for l, cls in enumerate(cfg.classes, start=1):
        if state.k(l) > cls.h_max:
            raise InconsistentStateError(
                f"class {l}: {state.k(l)} occupied clusters exceed h_max={cls.h_max}"
            )


def cocluster_probability(cfg: ModelConfig) -> float:
    """Prior probability that two distinct units share a cluster."""
    validate_config(cfg)
    alpha = cfg.alpha_total
    total = 0.0
    for cls in cfg.classes:
        class_factor = cls.alpha * (cls.alpha + 1.0) / (alpha * (alpha + 1.0))
        within_factor = (cls.c + cls.h_max) / (cls.c * cls.h_max + cls.h_max)
        total += class_factor * within_factor
    return total


def cocluster_probability_limit(cfg: ModelConfig) -> float:
    """Limit of the co-clustering probability as every h_max grows without bound."""
    validate_config(cfg)
    alpha = cfg.alpha_total
    return float(
        sum(
            cls.alpha * (cls.alpha + 1.0) / (alpha * (alpha + 1.0)) / (1.0 + cls.c)
            for cls in cfg.classes
        )
    )


def class_predictive(state: UrnState, cfg: ModelConfig) -> np.ndarray:
    """Probability of each class for the next unit: (alpha_l + n_l) / (alpha + n)."""
    _check_state(state, cfg)
    alphas = cfg.alphas
    counts = np.array(state.class_counts, dtype=np.float64)
    return (alphas + counts) / (cfg.alpha_total + state.n_total)


def within_class_predictive(
    state: UrnState, class_label: int, cfg: ModelConfig
) -> tuple[float, np.ndarray]:
    """Next-unit cluster probabilities within one class.

    Returns (new_prob, existing), where existing[j] is the probability of
    joining the j-th occupied cluster in order of appearance. The entries
    always sum to one.
    """
    _check_state(state, cfg)
    if not 1 <= class_label <= cfg.n_classes:
        raise InconsistentStateError(f"class label {class_label} out of range")
    cls = cfg.classes[class_label - 1]
    n_l = state.class_counts[class_label - 1]
    sizes = np.array([s for _, s in state.clusters[class_label - 1]], dtype=np.float64)
    k_l = len(sizes)
    denom = cls.c + n_l
    new_prob = (1.0 - k_l / cls.h_max) * cls.c / denom
    existing = (sizes + cls.c / cls.h_max) / denom
    return float(new_prob), existing


def new_cluster_probability(state: UrnState, cfg: ModelConfig) -> float:
    """Probability that the next unit opens a new cluster in any class."""
    class_probs = class_predictive(state, cfg)
    total = 0.0
    for l in range(1, cfg.n_classes + 1):
        new_prob, _ = within_class_predictive(state, l, cfg)
        total += class_probs[l - 1] * new_prob
    return total


@dataclass(frozen=True)
class PriorDraw:
    """A sampled prior partition: one class label and one cluster label per unit.

    Cluster labels are (class, within-class atom id) pairs; atom ids number
    the clusters of a class in order of appearance. ``coefficients`` maps each
    distinct cluster label to a sampled coefficient vector when attached.
    """

    class_labels: tuple[int, ...]
    cluster_labels: tuple[tuple[int, int], ...]
    coefficients: dict | None = None

    def __post_init__(self):
        if len(self.class_labels) != len(self.cluster_labels):
            raise InconsistentStateError("label sequences differ in length")
        for f, (l, _) in zip(self.class_labels, self.cluster_labels):
            if f != l:
                raise InconsistentStateError(
                    "cluster label class component disagrees with class label"
                )

    @property
    def n_units(self) -> int:
        return len(self.class_labels)

    def n_clusters(self) -> int:
        return len(set(self.cluster_labels))


def sample_partition(cfg: ModelConfig, n: int, seed) -> PriorDraw:
    """Draw class and cluster labels for n units by running the urn forward.

    For each unit, a class is drawn from the class urn, then either a new or
    an existing cluster from that class's urn. ``seed`` may be an integer or
    a numpy Generator (handy for repeated Monte-Carlo calls).
    """
    if n < 1:
        raise InconsistentStateError("n must be >= 1")
    rng = np.random.default_rng(seed)
    random = rng.random
    L = cfg.n_classes
    alphas = [cls.alpha for cls in cfg.classes]
    alpha = sum(alphas)
    cs = [cls.c for cls in cfg.classes]
    hs = [cls.h_max for cls in cfg.classes]
    class_counts = [0] * L
    sizes: list[list[int]] = [[] for _ in range(L)]

    class_labels = []
    cluster_labels = []
    for step in range(n):
        u = random() * (alpha + step)
        acc = 0.0
        l = L - 1
        for cand in range(L):
            acc += alphas[cand] + class_counts[cand]
            if u < acc:
                l = cand
                break

        c_l, h_l = cs[l], hs[l]
        k_l = len(sizes[l])
        u = random() * (c_l + class_counts[l])
        acc = (1.0 - k_l / h_l) * c_l
        if u < acc or k_l == 0:
            sizes[l].append(1)
            atom = k_l + 1
        else:
            atom = k_l  # falls through to the last cluster on float round-off
            base = c_l / h_l
            for j, size in enumerate(sizes[l], start=1):
                acc += size + base
                if u < acc:
                    atom = j
                    break
            sizes[l][atom - 1] += 1
        class_counts[l] += 1
        class_labels.append(l + 1)
        cluster_labels.append((l + 1, atom))
    return PriorDraw(
        class_labels=tuple(class_labels), cluster_labels=tuple(cluster_labels)
    )


def attach_coefficients(draw: PriorDraw, cfg: ModelConfig, seed: int) -> PriorDraw:
    """Sample one coefficient vector per distinct cluster in the draw."""
    validate_config(cfg)
    rng = np.random.default_rng(seed)
    coefficients = {}
    for label in sorted(set(draw.cluster_labels)):
        cls = cfg.classes[label[0] - 1]
        chol = np.linalg.cholesky(cls.prior_cov)
        z = rng.standard_normal(cls.dimension)
        coefficients[label] = cls.prior_mean + chol @ z
    return PriorDraw(
        class_labels=draw.class_labels,
        cluster_labels=draw.cluster_labels,
        coefficients=coefficients,
    )


def sample_prior_curves(
    cfg: ModelConfig, class_label: int, count: int, grid, seed: int
) -> np.ndarray:
    """Sample curves from one class's coefficient prior, evaluated on a grid.

    Returns an array of shape (count, len(grid)); row k is one draw.
    """
    validate_config(cfg)
    if not 1 <= class_label <= cfg.n_classes:
        raise InconsistentStateError(f"class label {class_label} out of range")
    cls = cfg.classes[class_label - 1]
    grid = np.asarray(grid, dtype=np.float64)
    design = _evaluate_grid(cls.basis, grid)
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(cls.prior_cov)
    z = rng.standard_normal((count, cls.dimension))
    betas = cls.prior_mean + z @ chol.T
    return betas @ design.T
