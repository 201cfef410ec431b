"""Empirical measures on segment space: second moments and Wasserstein-2.

An EmpiricalMeasure is an equal-weight list of segments standing in for the
law of the segment process.  W2 between equal-size measures is an exact
minimal assignment over the squared sup-distance matrix (solved with the
Hungarian-class algorithm from scipy); the labeled coupling bound is the
cheap upper bound E||X-Y||^2 used by the solvers.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from mvsde import kernels
from mvsde.errors import UnsupportedCheck
from mvsde.paths import Segment


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Equal-weight atoms; stacked as one (P, W, d) array internally."""

    atom_values: np.ndarray
    h: float

    def __post_init__(self):
        vals = np.asarray(self.atom_values, dtype=float)
        if vals.ndim == 2:
            vals = vals[None, :, :]
        if vals.ndim != 3 or vals.shape[0] < 1:
            raise ValueError("atoms must stack to a (P, W, d) array with P >= 1")
        object.__setattr__(self, "atom_values", np.ascontiguousarray(vals))

    @classmethod
    def from_segments(cls, segments):
        segments = list(segments)
        if not segments:
            raise ValueError("need at least one atom")
        h = segments[0].h
        shape = segments[0].values.shape
        for s in segments[1:]:
            if s.values.shape != shape or s.h != h:
                raise ValueError("atoms must share (d, r0, h)")
        return cls(np.stack([s.values for s in segments]), h)

    @property
    def n_atoms(self):
        return self.atom_values.shape[0]

    @property
    def atoms(self):
        return [Segment(v, self.h) for v in self.atom_values]

    def mean_values(self):
        return self.atom_values.mean(axis=0)


def second_moment(mu: EmpiricalMeasure) -> float:
    """(1/P) sum of squared segment sup norms."""
    sups = kernels.window_sup(mu.atom_values, 0, mu.atom_values.shape[1])
    return float(np.mean(sups * sups))


def _sq_supdist_matrix(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> np.ndarray:
    if mu.atom_values.shape[1:] != nu.atom_values.shape[1:]:
        raise ValueError("measures must share segment shape")
    return kernels.pairwise_sq_supdist(mu.atom_values, nu.atom_values)


def w2_assignment(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """Exact W2 between equal-size empirical measures (minimal assignment)."""
    if mu.n_atoms != nu.n_atoms:
        raise UnsupportedCheck(
            "w2_assignment needs equal atom counts; use w2_coupling_bound")
    cost = _sq_supdist_matrix(mu, nu)
    rows, cols = linear_sum_assignment(cost)
    return float(np.sqrt(cost[rows, cols].mean()))


def w2_coupling_bound(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """Upper bound from the label-preserving coupling; >= w2_assignment."""
    if mu.n_atoms != nu.n_atoms:
        raise ValueError("coupling bound needs shared particle labels")
    diff = mu.atom_values - nu.atom_values
    sups = kernels.window_sup(diff, 0, diff.shape[1])
    return float(np.sqrt(np.mean(sups * sups)))
