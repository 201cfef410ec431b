import numpy as np
import pytest

from mvsde.coefficients import CoefficientSet, Example5Family, FunctionalParams
from mvsde.errors import PreconditionError
from mvsde.operators import normal_cone_box, zero_operator
from mvsde.paths import TimeGrid, Trajectory, sup_distance
from mvsde.solver import (
    Control,
    SimConfig,
    batch_perturbed,
    brownian_increments,
    simulate_clt_pair,
    simulate_controlled,
    simulate_mdp_deviation,
    simulate_perturbed,
    solve_deterministic_limit,
    solve_mdp_skeleton,
    solve_skeleton,
)

HALF_LINE = normal_cone_box([0.0], [np.inf])


def fam(f=None, g=None, alpha=0.0, beta=0.0):
    return Example5Family(f=f or FunctionalParams(),
                          g=g or FunctionalParams(c0=1.0),
                          alpha=alpha, beta=beta)


def make_cfg(h=0.01, r0=0.01, T=1.0, op=None, coeffs=None, xi=0.0, **kw):
    grid = TimeGrid(h=h, r0=r0, T=T)
    op = op if op is not None else zero_operator(1)
    coeffs = coeffs if coeffs is not None else fam()
    xi_nodes = np.full((grid.n_history + 1, op.dimension), float(xi))
    return SimConfig(grid=grid, operator=op, coefficients=coeffs,
                     initial_segment=xi_nodes, **kw)


def endpoints(bundle):
    return np.array([p.values[-1, 0] for p in bundle.particles])


class TestPerturbed:
    def test_frozen_without_dynamics(self):
        cfg = make_cfg(coeffs=fam(g=FunctionalParams()), eps=0.0, xi=0.7)
        bundle = simulate_perturbed(cfg)
        assert np.all(bundle.particles[0].values == 0.7)
        assert bundle.k_variation[0] == 0.0

    def test_brownian_variance(self):
        # A=0, b=0, sigma=1, eps=1: X(T) is the summed increments, Var = T
        cfg = make_cfg(P=10_000, eps=1.0, seed=101)
        ends = endpoints(simulate_perturbed(cfg))
        var = ends.var()
        se = np.sqrt(2.0 / len(ends))  # sd of the variance of a unit Gaussian
        assert abs(var - 1.0) <= 3 * se

    def test_reflected_bm_mean(self):
        # reflected at 0: E|X(T)| ~ sqrt(2T/pi)
        cfg = make_cfg(h=0.001, r0=0.001, op=HALF_LINE, P=2000, eps=1.0, seed=7)
        ends = endpoints(simulate_perturbed(cfg))
        target = np.sqrt(2.0 / np.pi)
        se = ends.std(ddof=1) / np.sqrt(len(ends))
        assert abs(ends.mean() - target) <= 3 * se

    def test_domain_invariance(self):
        cfg = make_cfg(op=HALF_LINE, P=64, eps=1.0, seed=3)
        bundle = simulate_perturbed(cfg)
        for p in bundle.particles:
            assert np.min(p.values) >= 0.0

    def test_seed_determinism(self):
        cfg = make_cfg(op=HALF_LINE, P=16, eps=0.5, seed=11,
                       coeffs=fam(f=FunctionalParams(s="tanh", C1=0.5), alpha=0.3))
        a = simulate_perturbed(cfg)
        b = simulate_perturbed(cfg)
        for pa, pb in zip(a.particles, b.particles):
            assert np.array_equal(pa.values, pb.values)
        assert np.array_equal(a.noise, b.noise)
        c = simulate_perturbed(make_cfg(op=HALF_LINE, P=16, eps=0.5, seed=12,
                                        coeffs=cfg.coefficients))
        assert not np.array_equal(a.particles[0].values, c.particles[0].values)

    def test_noise_reuse_reproduces(self):
        cfg = make_cfg(P=8, eps=1.0, seed=21)
        a = simulate_perturbed(cfg)
        b = simulate_perturbed(cfg, noise=a.noise)
        assert np.array_equal(a.particles[3].values, b.particles[3].values)

    def test_initial_segment_projected_with_warning(self):
        grid = TimeGrid(h=0.1, r0=0.2, T=0.5)
        xi = np.array([[-0.5], [0.2], [0.6]])  # first node leaves [0, inf)
        with pytest.warns(UserWarning, match="projected"):
            cfg = SimConfig(grid=grid, operator=HALF_LINE, coefficients=fam(),
                            initial_segment=xi)
        assert cfg.initial_segment[0, 0] == 0.0
        assert cfg.initial_segment[1, 0] == 0.2

    def test_generic_adapter_matches_fast_path(self):
        family = Example5Family(
            f=FunctionalParams(s="tanh", c0=0.1, C1=0.4, C2=0.2, C3=0.3),
            g=FunctionalParams(s="tanh", c0=0.8, C1=0.2),
            alpha=0.5, beta=0.1,
        )
        stripped = CoefficientSet(b=family.b, sigma=family.sigma)
        base = make_cfg(h=0.02, r0=0.1, T=0.3, op=HALF_LINE, coeffs=family,
                        xi=0.4, P=3, eps=0.2, seed=5)
        slow = SimConfig(grid=base.grid, operator=base.operator, coefficients=stripped,
                         initial_segment=base.initial_segment, P=3, eps=0.2, seed=5)
        a = simulate_perturbed(base)
        b = simulate_perturbed(slow, noise=a.noise)
        for pa, pb in zip(a.particles, b.particles):
            assert np.allclose(pa.values, pb.values, atol=1e-12)


class TestZeroOperatorIsEulerMaruyama:
    def test_bitwise_match(self):
        c0f, C1, c0g = 0.3, -0.8, 1.4
        cfg = make_cfg(h=0.01, r0=0.01, T=0.5,
                       coeffs=fam(f=FunctionalParams(c0=c0f, C1=C1),
                                  g=FunctionalParams(c0=c0g)),
                       xi=0.9, P=4, eps=0.7, seed=13)
        bundle = simulate_perturbed(cfg)
        dW = bundle.noise
        W = cfg.grid.n_history + 1
        sq = np.sqrt(cfg.eps)
        x = np.full(4, 0.9)
        for k in range(cfg.grid.n_steps):
            drift = c0f + C1 * x
            x = (x + cfg.grid.h * drift) + sq * (c0g * dW[:, k, 0])
            got = np.array([p.values[W + k, 0] for p in bundle.particles])
            assert np.array_equal(got, x), f"mismatch at step {k}"
        for p in bundle.k_processes:
            assert np.all(p.values == 0.0)


class TestControlled:
    def test_zero_control_matches_perturbed(self):
        cfg = make_cfg(op=HALF_LINE, P=8, eps=0.5, seed=2,
                       coeffs=fam(f=FunctionalParams(s="tanh", C1=0.5), alpha=0.4))
        u0 = Control.zero(cfg.grid, cfg.m)
        a = simulate_perturbed(cfg)
        b = simulate_controlled(cfg, u0)
        for pa, pb in zip(a.particles, b.particles):
            assert np.array_equal(pa.values, pb.values)

    def test_constant_control_integrates_exactly(self):
        # eps=0, A=0, b=0, sigma=1, u=c: X(t) = xi(0) + c*t
        cfg = make_cfg(eps=0.0, xi=0.25)
        u = Control.constant(cfg.grid, [1.5])
        bundle = simulate_controlled(cfg, u)
        t = np.maximum(cfg.grid.times(), 0.0)
        assert np.allclose(bundle.particles[0].values[:, 0], 0.25 + 1.5 * t, atol=1e-12)

    def test_budget_rejected_by_constructor(self):
        grid = TimeGrid(h=0.1, r0=0.1, T=1.0)
        with pytest.raises(ValueError):
            Control(np.full((grid.n_steps, 1), 10.0), grid.h, budget=1.0)

    def test_eps_zero_matches_deterministic_limit(self):
        cfg = make_cfg(op=HALF_LINE, eps=0.0, xi=0.4,
                       coeffs=fam(f=FunctionalParams(s="tanh", c0=0.2, C1=0.5),
                                  alpha=0.3, beta=0.1))
        x0, _, _ = solve_deterministic_limit(cfg)
        bundle = simulate_controlled(cfg, Control.zero(cfg.grid, cfg.m))
        assert np.array_equal(bundle.particles[0].values, x0.values)


class TestDeterministicLimit:
    def test_exponential_decay_recursion(self):
        # b = -x(t): X_{k+1} = X_k - h*X_k, limit e^{-T}
        h, T = 0.01, 1.0
        cfg = make_cfg(h=h, r0=h, T=T, coeffs=fam(f=FunctionalParams(C1=-1.0)), xi=1.0)
        x0, _, _ = solve_deterministic_limit(cfg)
        end = x0.values[-1, 0]
        assert end == pytest.approx((1 - h) ** round(T / h), rel=1e-12)
        assert abs(end - np.exp(-1.0)) < h

    @pytest.mark.parametrize("h", [0.01, 0.005])
    def test_delay_method_of_steps(self, h):
        # b = -x(t - 1), xi = 1: X(1) = 0, X(2) = -1/2
        cfg = make_cfg(h=h, r0=1.0, T=2.0,
                       coeffs=fam(f=FunctionalParams(C2=-1.0)), xi=1.0)
        x0, _, _ = solve_deterministic_limit(cfg)
        assert abs(x0.value_at(1.0)[0] - 0.0) <= 5 * h
        assert abs(x0.value_at(2.0)[0] + 0.5) <= 5 * h

    def test_first_order_convergence(self):
        errs = []
        for h in (0.02, 0.01):
            cfg = make_cfg(h=h, r0=1.0, T=2.0,
                           coeffs=fam(f=FunctionalParams(C2=-1.0)), xi=1.0)
            x0, _, _ = solve_deterministic_limit(cfg)
            errs.append(abs(x0.value_at(2.0)[0] + 0.5))
        assert errs[0] / errs[1] >= 1.8

    def test_reflection_absorbs_constant_push(self):
        # b = -1 against the boundary: X stays 0, |K| = T
        cfg = make_cfg(op=HALF_LINE, coeffs=fam(f=FunctionalParams(c0=-1.0)), xi=0.0)
        x0, k0, kvar = solve_deterministic_limit(cfg)
        assert np.max(np.abs(x0.values)) == 0.0
        assert kvar == pytest.approx(1.0, abs=1e-10)
        assert k0.values[-1, 0] == pytest.approx(-1.0, abs=1e-10)


class TestSkeleton:
    def test_zero_control_reproduces_limit(self):
        cfg = make_cfg(op=HALF_LINE, xi=0.4,
                       coeffs=fam(f=FunctionalParams(s="tanh", c0=0.2, C1=0.5),
                                  alpha=0.3, beta=0.1))
        x0, _, _ = solve_deterministic_limit(cfg)
        path = solve_skeleton(cfg, Control.zero(cfg.grid, cfg.m), x0=x0)
        assert np.array_equal(path.values, x0.values)

    def test_pure_integrator(self):
        cfg = make_cfg(xi=0.0)
        path = solve_skeleton(cfg, Control.constant(cfg.grid, [1.0]))
        t = np.maximum(cfg.grid.times(), 0.0)
        assert np.allclose(path.values[:, 0], t, atol=1e-12)

    def test_reflection_cancels_inward_control(self):
        cfg = make_cfg(op=HALF_LINE, xi=0.0)
        path = solve_skeleton(cfg, Control.constant(cfg.grid, [-1.0]))
        assert np.max(np.abs(path.values)) == 0.0


class TestMdpDeviation:
    def test_requires_positive_eps_and_rule(self):
        cfg = make_cfg(eps=0.0, a_eps_gamma=0.25)
        with pytest.raises(PreconditionError):
            simulate_mdp_deviation(cfg)
        with pytest.raises(PreconditionError):
            simulate_mdp_deviation(make_cfg(eps=0.1))  # no a(eps) rule

    def test_requires_zero_in_graph(self):
        shifted = normal_cone_box([1.0], [2.0])
        grid = TimeGrid(h=0.1, r0=0.1, T=0.5)
        cfg = SimConfig(grid=grid, operator=shifted, coefficients=fam(),
                        initial_segment=np.full((2, 1), 1.5), eps=0.1,
                        a_eps_gamma=0.25)
        with pytest.raises(PreconditionError):
            simulate_mdp_deviation(cfg)

    def test_unit_scale_reduces_to_direct_subtraction(self):
        # eps=1 makes a(eps)=1: the auxiliary system IS X^eps - X0
        family = fam(f=FunctionalParams(s="identity", c0=0.1, C1=0.4, C3=0.2),
                     g=FunctionalParams(c0=0.8, C1=0.1), alpha=0.5)
        cfg = make_cfg(h=0.01, r0=0.05, T=0.5, coeffs=family, xi=0.3,
                       P=4, eps=1.0, seed=17, a_eps_gamma=0.25)
        x0, _, _ = solve_deterministic_limit(cfg)
        dev = simulate_mdp_deviation(cfg, x0=x0)
        direct = simulate_perturbed(cfg, noise=dev.noise)
        for p_dev, p_x in zip(dev.particles, direct.particles):
            diff = p_dev.values + x0.values - p_x.values
            assert np.max(np.abs(diff)) <= 1e-10

    def test_zero_control_matches_uncontrolled(self):
        cfg = make_cfg(op=HALF_LINE, coeffs=fam(f=FunctionalParams(s="tanh", C1=0.4),
                                                alpha=0.3),
                       xi=0.5, P=4, eps=0.01, seed=23, a_eps_gamma=0.25)
        a = simulate_mdp_deviation(cfg)
        b = simulate_mdp_deviation(cfg, u=Control.zero(cfg.grid, cfg.m))
        for pa, pb in zip(a.particles, b.particles):
            assert np.array_equal(pa.values, pb.values)

    def test_moments_shrink_with_eps(self):
        cfg = make_cfg(op=HALF_LINE, coeffs=fam(f=FunctionalParams(s="tanh", C1=0.4)),
                       xi=0.5, P=1, eps=1e-2, seed=29, a_eps_gamma=0.25)
        sup_sq = []
        for eps in (1e-2, 1e-4):
            cfg_e = SimConfig(grid=cfg.grid, operator=cfg.operator,
                              coefficients=cfg.coefficients,
                              initial_segment=cfg.initial_segment, P=1, eps=eps,
                              seed=29, a_eps_gamma=0.25)
            Vm = [simulate_mdp_deviation(cfg_e).particles[0].values for _ in range(1)]
            sup_sq.append(np.max(np.abs(Vm[0])) ** 2)
        assert sup_sq[1] < sup_sq[0]


class TestMdpSkeleton:
    def test_zero_control_stays_zero(self):
        cfg = make_cfg(op=HALF_LINE, xi=0.5,
                       coeffs=fam(f=FunctionalParams(s="tanh", C1=0.5), alpha=0.2))
        path = solve_mdp_skeleton(cfg, Control.zero(cfg.grid, cfg.m))
        assert np.max(np.abs(path.values)) == 0.0

    def test_scalar_linear_ode(self):
        # drift beta*m + 1, m(0)=0: m(T) = (e^{beta T}-1)/beta up to O(h)
        beta, h, T = 0.5, 0.01, 1.0
        cfg = make_cfg(h=h, r0=h, T=T, coeffs=fam(f=FunctionalParams(C1=beta)), xi=1.0)
        path = solve_mdp_skeleton(cfg, Control.constant(cfg.grid, [1.0]))
        end = path.values[-1, 0]
        # exact recursion of the scheme
        m = 0.0
        for _ in range(round(T / h)):
            m = m + h * (beta * m + 1.0)
        assert end == pytest.approx(m, rel=1e-12)
        assert abs(end - (np.exp(beta * T) - 1.0) / beta) < 2 * h

    def test_reflection_absorbs_inward_control(self):
        cfg = make_cfg(op=HALF_LINE, xi=0.5, coeffs=fam())
        path = solve_mdp_skeleton(cfg, Control.constant(cfg.grid, [-1.0]))
        assert np.max(np.abs(path.values)) == 0.0


class TestCltPair:
    def test_no_noise_source(self):
        cfg = make_cfg(op=HALF_LINE, xi=0.5, eps=0.01, seed=31,
                       coeffs=fam(f=FunctionalParams(s="tanh", C1=0.4),
                                  g=FunctionalParams()))  # sigma = 0
        z_eps, z = simulate_clt_pair(cfg)
        assert np.max(np.abs(z_eps.particles[0].values)) == 0.0
        assert np.max(np.abs(z.particles[0].values)) == 0.0

    def test_degenerate_case_identical(self):
        # A=0, b=0, sigma=1: both systems are the same Brownian path
        cfg = make_cfg(eps=0.01, P=8, seed=37)
        z_eps, z = simulate_clt_pair(cfg)
        for pa, pb in zip(z_eps.particles, z.particles):
            assert np.array_equal(pa.values, pb.values)

    def test_requires_domain_containing_zero(self):
        shifted = normal_cone_box([1.0], [2.0])
        grid = TimeGrid(h=0.1, r0=0.1, T=0.5)
        cfg = SimConfig(grid=grid, operator=shifted, coefficients=fam(),
                        initial_segment=np.full((2, 1), 1.5), eps=0.1)
        with pytest.raises(PreconditionError):
            simulate_clt_pair(cfg)

    def test_coupled_difference_scales_with_eps(self):
        family = Example5Family(
            f=FunctionalParams(s="tanh", c0=0.2, C1=0.5, C2=0.3, C3=0.3),
            g=FunctionalParams(s="tanh", c0=0.6, C1=0.2, C3=0.1),
            alpha=0.4, beta=0.1,
        )
        grid = TimeGrid(h=0.004, r0=0.2, T=0.4)
        xi = np.linspace(0.0, 0.5, grid.n_history + 1)[:, None]
        sups = []
        for eps in (1e-2, 1e-4):
            cfg = SimConfig(grid=grid, operator=HALF_LINE, coefficients=family,
                            initial_segment=xi, P=32, eps=eps, seed=41)
            z_eps, z = simulate_clt_pair(cfg)
            diffs = [np.max(np.abs(a.values - b.values))
                     for a, b in zip(z_eps.particles, z.particles)]
            sups.append(np.mean(np.square(diffs)))
        ratio = sups[0] / sups[1]
        # E sup^2 scales like eps: ratio should be around 100
        assert 20 < ratio < 500


class TestPairedRunsMonotonePairing:
    def test_per_step_pairing_nonnegative(self):
        # same scheme, same noise, different starts: <x - x', dK - dK'> >= 0 per step
        coeffs = fam(f=FunctionalParams(s="tanh", c0=-0.5, C1=0.3),
                     g=FunctionalParams(c0=1.0))
        noise = brownian_increments(99, (0,), 1, 100, 1, 0.01)
        bundles = []
        for xi in (0.0, 0.8):
            cfg = make_cfg(op=HALF_LINE, coeffs=coeffs, xi=xi, eps=1.0, seed=99)
            bundles.append(simulate_perturbed(cfg, noise=noise))
        a, b = bundles
        xa, xb = a.particles[0].values, b.particles[0].values
        ka, kb = a.k_processes[0].values, b.k_processes[0].values
        W = 1 + a.particles[0].grid.n_history
        for k in range(100):
            dx = xa[W + k] - xb[W + k]
            dk = (ka[W + k] - ka[W + k - 1]) - (kb[W + k] - kb[W + k - 1])
            assert float(dx @ dk) >= -1e-10


class TestBatchEntryPoints:
    def test_batch_matches_single_runs(self):
        cfg = make_cfg(op=HALF_LINE, P=2, eps=0.3, seed=55,
                       coeffs=fam(f=FunctionalParams(s="tanh", C1=0.5), alpha=0.4))
        V = batch_perturbed(cfg, replicas=3, stream=(0,))
        # replica blocks evolve independently: replica r uses its slice of the noise
        dW = brownian_increments(cfg.seed, (0,), 3 * cfg.P, cfg.grid.n_steps,
                                 cfg.m, cfg.grid.h)
        single = simulate_perturbed(cfg, noise=dW[2 * cfg.P:3 * cfg.P])
        for p in range(cfg.P):
            assert np.array_equal(V[2 * cfg.P + p], single.particles[p].values)
