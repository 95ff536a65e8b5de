"""Point estimates and cluster reports from a fitted variational state.

The cluster estimate of a unit is the (class, atom) pair maximizing its
assignment probabilities; the class estimate maximizes the per-class sums.
The two can disagree when a class's mass is spread over several atoms, so
both are reported. Ties break to the lexicographically smallest label.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .basis import _evaluate_grid
from .cavi import VariationalState, class_slices, column_labels
from .config import ModelConfig
from .dataset import FunctionalDataset
from .errors import LengthMismatchError, MissingVolumesError, OutOfSupportError


def map_assignments_from_rho(
    rho: np.ndarray, h_list
) -> tuple[tuple[tuple[int, int], ...], tuple[int, ...]]:
    """Argmax labels from a responsibility matrix in the flat column layout."""
    labels = column_labels(h_list)
    g_hat = tuple(labels[j] for j in np.argmax(rho, axis=1))
    class_mass = np.column_stack(
        [rho[:, sl].sum(axis=1) for sl in class_slices(h_list)]
    )
    f_hat = tuple(int(l) + 1 for l in np.argmax(class_mass, axis=1))
    return g_hat, f_hat


def map_assignments(
    state: VariationalState,
) -> tuple[tuple[tuple[int, int], ...], tuple[int, ...]]:
    """(cluster label per unit, class label per unit), both 1-based."""
    return map_assignments_from_rho(state.rho, state.h_list)


def estimate_curve(
    state: VariationalState, cfg: ModelConfig, label: tuple[int, int], grid
) -> np.ndarray:
    """Variational mean curve of one atom evaluated on a grid."""
    grid = np.asarray(grid, dtype=np.float64)
    mean, _ = state.atom(label)
    try:
        design = _evaluate_grid(cfg.classes[label[0] - 1].basis, grid)
    except OutOfSupportError:
        raise
    return design @ mean


def contingency(true_labels, est_labels) -> np.ndarray:
    """Co-occurrence counts; rows follow sorted distinct true labels, columns
    sorted distinct estimated labels."""
    matrix, _, _ = contingency_with_labels(true_labels, est_labels)
    return matrix


def contingency_with_labels(true_labels, est_labels):
    true_labels = list(true_labels)
    est_labels = list(est_labels)
    if len(true_labels) != len(est_labels):
        raise LengthMismatchError(
            f"{len(true_labels)} true labels vs {len(est_labels)} estimated"
        )
    rows = sorted(set(true_labels))
    cols = sorted(set(est_labels))
    row_index = {lab: i for i, lab in enumerate(rows)}
    col_index = {lab: j for j, lab in enumerate(cols)}
    matrix = np.zeros((len(rows), len(cols)), dtype=np.int64)
    for t, e in zip(true_labels, est_labels):
        matrix[row_index[t], col_index[e]] += 1
    return matrix, rows, cols


def permutation_accuracy(true_labels, est_labels) -> float:
    """Fraction correct under the best injective relabeling of the estimated
    labels onto the true ones (optimal assignment on the contingency matrix)."""
    matrix = contingency(true_labels, est_labels)
    row_ind, col_ind = linear_sum_assignment(matrix, maximize=True)
    return float(matrix[row_ind, col_ind].sum()) / float(matrix.sum())


@dataclass(frozen=True, eq=False)
class ClusterReport:
    """Hard assignments plus per-cluster aggregates.

    ``occupied`` lists the clusters at least one unit points at;
    ``frequencies`` count the pointing units per occupied label. ``volumes``
    and ``curves`` are filled only when the inputs carry them.
    """

    g_hat: tuple[tuple[int, int], ...]
    f_hat: tuple[int, ...]
    occupied: tuple[tuple[int, int], ...]
    frequencies: dict
    volumes: dict | None = None
    curves: dict | None = None

    def __post_init__(self):
        if sum(self.frequencies.values()) != len(self.g_hat):
            raise LengthMismatchError("cluster frequencies do not sum to n")

    @property
    def n_clusters(self) -> int:
        return len(self.occupied)

    def class_disagreements(self) -> tuple[int, ...]:
        """0-based indices of units whose class estimate disagrees with the
        class component of their cluster estimate."""
        return tuple(
            i for i, (g, f) in enumerate(zip(self.g_hat, self.f_hat)) if g[0] != f
        )


def volume_report(report: ClusterReport, data: FunctionalDataset) -> dict:
    """Sum of member volumes per occupied cluster."""
    if not data.has_volumes:
        raise MissingVolumesError("dataset carries no volume metadata")
    sums = {label: 0.0 for label in report.occupied}
    for unit, label in zip(data.units, report.g_hat):
        sums[label] += unit.volume
    return sums


def build_report(
    state: VariationalState,
    cfg: ModelConfig,
    data: FunctionalDataset | None = None,
    grid=None,
) -> ClusterReport:
    """Assemble assignments, occupancy, frequencies, and optional volume sums
    and estimated curves into one report."""
    g_hat, f_hat = map_assignments(state)
    occupied = tuple(sorted(set(g_hat)))
    frequencies = {label: 0 for label in occupied}
    for label in g_hat:
        frequencies[label] += 1
    curves = None
    if grid is not None:
        curves = {
            label: estimate_curve(state, cfg, label, grid) for label in occupied
        }
    report = ClusterReport(
        g_hat=g_hat,
        f_hat=f_hat,
        occupied=occupied,
        frequencies=frequencies,
        curves=curves,
    )
    if data is not None and data.has_volumes:
        report = ClusterReport(
            g_hat=report.g_hat,
            f_hat=report.f_hat,
            occupied=report.occupied,
            frequencies=report.frequencies,
            volumes=volume_report(report, data),
            curves=report.curves,
        )
    return report
