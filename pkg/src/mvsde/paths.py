"""Grid-based trajectories on [-r0, T], segment views and sup norms.

A trajectory stores one node per grid time; values are interpreted as
piecewise linear, so the continuous sup over any cell is attained at a node
and all norms below are grid maxima.
"""

from dataclasses import dataclass, field

import numpy as np

from mvsde.errors import GridMismatch


def _count_multiple(span, h, name):
    n = span / h
    k = int(round(n))
    if k < 1 or abs(n - k) > 1e-9 * max(1.0, abs(n)):
        raise ValueError(f"{name}={span} is not a positive integer multiple of h={h}")
    return k


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid with nodes k*h for k = -n_history .. n_steps."""

    h: float
    r0: float
    T: float
    n_history: int = field(init=False)
    n_steps: int = field(init=False)

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("step size h must be positive")
        object.__setattr__(self, "n_history", _count_multiple(self.r0, self.h, "r0"))
        object.__setattr__(self, "n_steps", _count_multiple(self.T, self.h, "T"))

    @property
    def n_nodes(self):
        return self.n_history + self.n_steps + 1

    def times(self):
        return (np.arange(self.n_nodes) - self.n_history) * self.h

    def step_of(self, t):
        """Step index k with t = k*h, for t in [0, T]."""
        k = int(round(t / self.h))
        if abs(t - k * self.h) > 1e-9 * max(1.0, abs(t)):
            raise IndexError(f"time {t} is not on the grid (h={self.h})")
        if not 0 <= k <= self.n_steps:
            raise IndexError(f"time {t} outside [0, {self.T}]")
        return k


@dataclass(frozen=True)
class Trajectory:
    """Path values on the full grid, shape (n_nodes, d)."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape[0] != self.grid.n_nodes:
            raise ValueError(
                f"expected {self.grid.n_nodes} nodes, got {vals.shape[0]}"
            )
        vals = np.ascontiguousarray(vals)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def d(self):
        return self.values.shape[1]

    def value_at(self, t):
        """Node value at grid time t (t may be in [-r0, T])."""
        k = int(round(t / self.grid.h))
        if abs(t - k * self.grid.h) > 1e-9 * max(1.0, abs(t)):
            raise IndexError(f"time {t} is not on the grid")
        idx = k + self.grid.n_history
        if not 0 <= idx < self.grid.n_nodes:
            raise IndexError(f"time {t} outside [-r0, T]")
        return self.values[idx]


@dataclass(frozen=True)
class Segment:
    """History slice of length r0 reindexed to [-r0, 0]; shape (n_history+1, d)."""

    values: np.ndarray
    h: float

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        object.__setattr__(self, "values", vals)

    @property
    def d(self):
        return self.values.shape[1]

    @property
    def r0(self):
        return (self.values.shape[0] - 1) * self.h

    def value(self, theta):
        """Node value at offset theta in [-r0, 0]."""
        j = int(round((theta + self.r0) / self.h))
        if not 0 <= j < self.values.shape[0]:
            raise IndexError(f"offset {theta} outside [-{self.r0}, 0]")
        return self.values[j]

    def __add__(self, other):
        return Segment(self.values + other.values, self.h)

    def __sub__(self, other):
        return Segment(self.values - other.values, self.h)

    def __mul__(self, scalar):
        return Segment(self.values * float(scalar), self.h)

    __rmul__ = __mul__


def segment_at(x: Trajectory, t) -> Segment:
    """Segment view of x over [t-r0, t], node j = trajectory node k-n_history+j."""
    k = x.grid.step_of(t)
    lo = k  # trajectory node index of t-r0 is k - n_history + n_history
    hi = k + x.grid.n_history + 1
    return Segment(x.values[lo:hi], x.grid.h)


def sup_norm(s: Segment) -> float:
    """Grid sup of Euclidean node norms; 0 iff all nodes vanish."""
    return float(np.sqrt(np.max(np.sum(s.values * s.values, axis=1))))


def sup_distance(x: Trajectory, y: Trajectory) -> float:
    """Max node-wise distance over the full grid [-r0, T]."""
    if x.grid != y.grid:
        raise GridMismatch("trajectories live on different grids")
    diff = x.values - y.values
    return float(np.sqrt(np.max(np.sum(diff * diff, axis=1))))


def constant_trajectory(grid: TimeGrid, value) -> Trajectory:
    v = np.atleast_1d(np.asarray(value, dtype=float))
    return Trajectory(grid, np.tile(v, (grid.n_nodes, 1)))


def trajectory_to_csv(x: Trajectory, path):
    """Write `t,x1..xd` rows, ascending from -r0, full float precision."""
    times = x.grid.times()
    header = "t," + ",".join(f"x{i + 1}" for i in range(x.d))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for t, row in zip(times, x.values):
            cells = ",".join("%.17g" % v for v in row)
            fh.write("%.17g,%s\n" % (t, cells))


def trajectory_from_csv(path, grid: TimeGrid = None) -> Trajectory:
    """Read a trajectory CSV; infers the grid from the time column if not given."""
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    data = np.atleast_2d(data)
    times, values = data[:, 0], data[:, 1:]
    if grid is None:
        h = times[1] - times[0]
        grid = TimeGrid(h=h, r0=-times[0], T=times[-1])
    if len(times) != grid.n_nodes:
        raise GridMismatch(f"{path}: {len(times)} rows, grid wants {grid.n_nodes}")
    return Trajectory(grid, values)
