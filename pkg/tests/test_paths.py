import numpy as np
import pytest

from mvsde.errors import GridMismatch
from mvsde.paths import (
    Segment,
    TimeGrid,
    Trajectory,
    constant_trajectory,
    segment_at,
    sup_distance,
    sup_norm,
    trajectory_from_csv,
    trajectory_to_csv,
)


def ramp_trajectory(grid):
    # X(t) = t on the whole grid
    return Trajectory(grid, grid.times()[:, None])


class TestTimeGrid:
    def test_counts(self):
        grid = TimeGrid(h=0.25, r0=1.0, T=2.0)
        assert grid.n_history == 4
        assert grid.n_steps == 8
        assert grid.n_nodes == 13
        assert grid.times()[0] == pytest.approx(-1.0)
        assert grid.times()[-1] == pytest.approx(2.0)

    def test_rejects_misaligned(self):
        with pytest.raises(ValueError):
            TimeGrid(h=0.3, r0=1.0, T=2.0)
        with pytest.raises(ValueError):
            TimeGrid(h=-0.1, r0=1.0, T=1.0)

    def test_step_of(self):
        grid = TimeGrid(h=0.25, r0=0.5, T=1.0)
        assert grid.step_of(0.5) == 2
        with pytest.raises(IndexError):
            grid.step_of(0.3)
        with pytest.raises(IndexError):
            grid.step_of(1.25)


class TestSegmentAt:
    def test_constant(self):
        grid = TimeGrid(h=0.25, r0=1.0, T=1.0)
        x = constant_trajectory(grid, [3.0])
        seg = segment_at(x, 0.5)
        assert np.all(seg.values == 3.0)

    def test_identity_path(self):
        # X(t) = t, segment at t=0 is theta -> theta on [-1, 0]
        grid = TimeGrid(h=0.25, r0=1.0, T=1.0)
        seg = segment_at(ramp_trajectory(grid), 0.0)
        assert np.allclose(seg.values[:, 0], [-1.0, -0.75, -0.5, -0.25, 0.0])
        assert seg.value(-1.0)[0] == pytest.approx(-1.0)

    def test_history_then_zero(self):
        # history 1, zero afterwards: at t = r0 only theta = -r0 sees the history
        grid = TimeGrid(h=0.25, r0=1.0, T=1.0)
        vals = np.zeros((grid.n_nodes, 1))
        vals[: grid.n_history + 1] = 1.0
        seg = segment_at(Trajectory(grid, vals), 1.0)
        assert seg.values[0, 0] == 1.0
        assert np.all(seg.values[1:] == 0.0)

    def test_view_round_trip(self):
        grid = TimeGrid(h=0.5, r0=1.0, T=2.0)
        x = ramp_trajectory(grid)
        for k in range(grid.n_steps + 1):
            seg = segment_at(x, k * grid.h)
            assert np.array_equal(seg.values, x.values[k:k + grid.n_history + 1])

    def test_out_of_range(self):
        grid = TimeGrid(h=0.5, r0=1.0, T=2.0)
        with pytest.raises(IndexError):
            segment_at(ramp_trajectory(grid), 2.5)


class TestSupNorm:
    def test_zero(self):
        assert sup_norm(Segment(np.zeros((5, 2)), 0.25)) == 0.0

    def test_ramp_attained_at_left(self):
        seg = Segment(np.linspace(-1.0, 0.0, 5)[:, None], 0.25)
        assert sup_norm(seg) == pytest.approx(1.0)

    def test_euclidean_nodes(self):
        seg = Segment(np.array([[3.0, 4.0], [0.0, 0.0]]), 1.0)
        assert sup_norm(seg) == pytest.approx(5.0)

    def test_norm_axioms_on_grid_data(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            a = Segment(rng.normal(size=(6, 2)), 0.2)
            b = Segment(rng.normal(size=(6, 2)), 0.2)
            c = float(rng.normal())
            assert sup_norm(a + b) <= sup_norm(a) + sup_norm(b) + 1e-12
            assert sup_norm(c * a) == pytest.approx(abs(c) * sup_norm(a))


class TestSupDistance:
    def test_identical(self):
        grid = TimeGrid(h=0.25, r0=0.5, T=1.0)
        x = ramp_trajectory(grid)
        assert sup_distance(x, x) == 0.0

    def test_translation(self):
        grid = TimeGrid(h=0.25, r0=0.5, T=1.0)
        x = ramp_trajectory(grid)
        y = Trajectory(grid, x.values + 2.5)
        assert sup_distance(x, y) == pytest.approx(2.5)

    def test_parabola_vs_line(self):
        # x(t)=t, y(t)=t^2 on [0,1] grid h=0.25: max |t - t^2| on nodes is 0.25
        grid = TimeGrid(h=0.25, r0=0.25, T=1.0)
        t = grid.times()
        x = Trajectory(grid, t[:, None])
        y = Trajectory(grid, np.where(t[:, None] < 0, t[:, None], (t * t)[:, None]))
        assert sup_distance(x, y) == pytest.approx(0.25)

    def test_grid_mismatch(self):
        x = ramp_trajectory(TimeGrid(h=0.25, r0=0.5, T=1.0))
        y = ramp_trajectory(TimeGrid(h=0.5, r0=0.5, T=1.0))
        with pytest.raises(GridMismatch):
            sup_distance(x, y)

    def test_matches_segmentwise_sup(self):
        grid = TimeGrid(h=0.5, r0=1.0, T=2.0)
        rng = np.random.default_rng(3)
        x = Trajectory(grid, rng.normal(size=(grid.n_nodes, 2)))
        y = Trajectory(grid, rng.normal(size=(grid.n_nodes, 2)))
        seg_sup = max(
            sup_norm(Segment(segment_at(x, k * grid.h).values
                             - segment_at(y, k * grid.h).values, grid.h))
            for k in range(grid.n_steps + 1)
        )
        assert seg_sup == pytest.approx(sup_distance(x, y))


class TestCsv:
    def test_round_trip(self, tmp_path):
        grid = TimeGrid(h=0.25, r0=0.5, T=1.0)
        rng = np.random.default_rng(1)
        x = Trajectory(grid, rng.normal(size=(grid.n_nodes, 3)))
        path = tmp_path / "traj.csv"
        trajectory_to_csv(x, path)
        header = path.read_text().splitlines()[0]
        assert header == "t,x1,x2,x3"
        back = trajectory_from_csv(path)
        assert back.grid == grid
        assert np.array_equal(back.values, x.values)
