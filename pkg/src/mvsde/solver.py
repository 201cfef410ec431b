"""Split-step resolvent Euler schemes for every equation system.

One step kernel drives everything: from state x_k, segment s_k and the
per-step empirical law mu_k,

    Y = x_k + drift*h + diffusion-term,    (x_{k+1}, dK_k) = (R_h(Y), Y - R_h(Y)).

The systems differ only in how the drift/diffusion are composed:

* perturbed:      drift b(s_k, mu_k),              diffusion sqrt(eps)*sigma(s_k, mu_k)
* controlled:     drift b + sigma*u (law from an uncontrolled companion run)
* deterministic:  eps = 0, single particle, own one-atom law
* skeleton:       drift b(s_k, law-of-limit) + sigma*u, no noise
* mdp/clt deviation: state is the normalized deviation; the underlying path
  is reconstructed as X = X0 + scale*state for coefficient evaluation
* mdp skeleton / clt limit: drift from Frechet (and intrinsic-measure)
  derivative pairings evaluated along the deterministic limit

All particles of a replica advance synchronously so the frozen law mu_k is
consistent; Monte Carlo replicas are carried as extra vector lanes.  Noise
comes from the counter-based Philox generator keyed by (seed, stream), so
runs are reproducible regardless of scheduling.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from mvsde import kernels
from mvsde.coefficients import CoefficientSet, Example5Family, eval_b, eval_sigma, \
    frechet_pairing, lions_pairing
from mvsde.errors import CoefficientEvaluationError, PreconditionError
from mvsde.measures import EmpiricalMeasure
from mvsde.operators import MonotoneOperator, apply_domain_project_batch, \
    apply_resolvent_batch
from mvsde.paths import Segment, TimeGrid, Trajectory


# ---------------------------------------------------------------------------
# configuration objects

@dataclass(frozen=True)
class Control:
    """Piecewise-constant control on [0, T]; energy h*sum|u_k|^2 capped by budget."""

    values: np.ndarray  # (n_steps, m)
    h: float
    budget: float = np.inf

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        vals = np.ascontiguousarray(vals)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.energy > self.budget * (1 + 1e-12):
            raise ValueError(
                f"control energy {self.energy:.6g} exceeds budget {self.budget:.6g}")

    @property
    def m(self):
        return self.values.shape[1]

    @property
    def energy(self):
        return float(self.h * np.sum(self.values * self.values))

    @classmethod
    def constant(cls, grid: TimeGrid, value, budget=np.inf):
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(np.tile(v, (grid.n_steps, 1)), grid.h, budget)

    @classmethod
    def zero(cls, grid: TimeGrid, m: int, budget=np.inf):
        return cls(np.zeros((grid.n_steps, m)), grid.h, budget)


@dataclass(frozen=True)
class SimConfig:
    """Everything one run needs; immutable and hashable by content."""

    grid: TimeGrid
    operator: MonotoneOperator
    coefficients: CoefficientSet
    initial_segment: np.ndarray  # (n_history+1, d) nodes on [-r0, 0]
    P: int = 1
    m: int = 1
    eps: float = 0.0
    seed: int = 0
    a_eps_gamma: float = None  # MDP rule a(eps) = eps**gamma, gamma in (0, 1/2)
    couple_companion: bool = True

    def __post_init__(self):
        xi = self.initial_segment
        if isinstance(xi, Segment):
            xi = xi.values
        xi = np.asarray(xi, dtype=float)
        if xi.ndim == 1:
            xi = xi[:, None]
        d = self.operator.dimension
        if xi.shape != (self.grid.n_history + 1, d):
            raise ValueError(
                f"initial segment must be ({self.grid.n_history + 1}, {d}), got {xi.shape}")
        projected = apply_domain_project_batch(self.operator, np.ascontiguousarray(xi))
        moved = np.sqrt(np.max(np.sum((projected - xi) ** 2, axis=1)))
        if moved > 1e-12:
            warnings.warn(
                f"initial segment projected onto the operator domain (moved {moved:.3g})")
        projected = np.ascontiguousarray(projected)
        projected.setflags(write=False)
        object.__setattr__(self, "initial_segment", projected)
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if self.P < 1:
            raise ValueError("P must be >= 1")
        if self.a_eps_gamma is not None and not 0.0 < self.a_eps_gamma < 0.5:
            raise ValueError("a_eps rule needs gamma in (0, 1/2)")

    @property
    def d(self):
        return self.operator.dimension

    def a_eps(self, eps=None):
        if self.a_eps_gamma is None:
            raise PreconditionError("no a(eps) rule configured")
        e = self.eps if eps is None else eps
        return float(e) ** self.a_eps_gamma

    def initial_segment_obj(self) -> Segment:
        return Segment(self.initial_segment, self.grid.h)


@dataclass(frozen=True)
class SolutionBundle:
    """P particle paths, their reflection terms and the noise that drove them."""

    particles: list
    k_processes: list
    k_variation: np.ndarray  # (P,)
    noise: np.ndarray  # (P, n_steps, m) Brownian increments

    @property
    def P(self):
        return len(self.particles)


# ---------------------------------------------------------------------------
# noise

def brownian_increments(seed: int, stream: tuple, lanes: int, n_steps: int,
                        m: int, h: float) -> np.ndarray:
    """Counter-based Gaussian increments, a pure function of (seed, stream)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    gen = np.random.Generator(np.random.Philox(ss))
    return gen.standard_normal((lanes, n_steps, m)) * np.sqrt(h)


# ---------------------------------------------------------------------------
# batched coefficient adapters

class _Example5Batch:
    """Vectorized closed forms of the configurable scalar family."""

    def __init__(self, fam: Example5Family, grid: TimeGrid):
        W = grid.n_history + 1
        self.fam = fam
        self.wf = np.ascontiguousarray(fam.f.weights(W, grid.h))
        self.wg = np.ascontiguousarray(fam.g.weights(W, grid.h))
        self.c0f = fam.f.c0
        self.c0g = fam.g.c0
        self.sf = fam.f.s_fn
        self.sfp = fam.f.s_prime
        self.sg = fam.g.s_fn
        self.alpha = fam.alpha
        self.beta = fam.beta
        self.const_term = fam.beta * fam.f.weight_of_constants
        self.d = 1
        self.m = 1
        self._b0 = None
        self._sigma0 = None
        self._sp0 = None

    def _arg(self, V, k0, mV, mR, mP, R, P):
        arg = self.c0f + kernels.window_dot(V, k0, self.wf)  # (L, 1)
        if self.alpha != 0.0:
            ellm = kernels.window_dot(mV, k0, self.wf).reshape(mR, mP).mean(axis=1)
            if mR == 1:
                arg += self.alpha * ellm[0] + self.const_term
            else:
                arg.reshape(R, P, 1)[...] += self.alpha * ellm[:, None, None]
                arg += self.const_term
        elif self.beta != 0.0:
            arg += self.const_term
        return arg

    def eval(self, V, k0, mV, mR, mP, R, P):
        arg = self._arg(V, k0, mV, mR, mP, R, P)
        b = self.sf(arg)
        sig = self.sg(self.c0g + kernels.window_dot(V, k0, self.wg))
        return b, sig[:, :, None]

    def set_x0(self, x0V, grid: TimeGrid):
        S = grid.n_steps
        b0 = np.empty((S, 1))
        sigma0 = np.empty((S, 1, 1))
        sp0 = np.empty(S)
        for k in range(S):
            arg = self._arg(x0V, k, x0V, 1, 1, 1, 1)[0, 0]
            b0[k, 0] = self.sf(arg)
            sp0[k] = self.sfp(arg)
            sigma0[k, 0, 0] = self.sg(self.c0g + kernels.window_dot(x0V, k, self.wg)[0, 0])
        self._b0, self._sigma0, self._sp0 = b0, sigma0, sp0

    def b0(self, k):
        return self._b0[k]

    def sigma0(self, k):
        return self._sigma0[k]

    def lin_drift(self, V, k0, R, P, lions: bool):
        # <Db(X0_t, delta), dir_t> per lane, plus the averaged intrinsic term
        ell = kernels.window_dot(V, k0, self.wf)  # (L, 1)
        if lions and self.alpha != 0.0:
            mean_ell = ell.reshape(R, P).mean(axis=1)  # (R,)
            ell = ell + 0.0  # copy before in-place broadcast
            ell.reshape(R, P, 1)[...] += self.alpha * mean_ell[:, None, None]
        return self._sp0[k0] * ell


class _GenericBatch:
    """Object-level fallback: loops lanes through the scalar coefficient API."""

    def __init__(self, coeffs: CoefficientSet, grid: TimeGrid, d: int, m: int):
        self.c = coeffs
        self.h = grid.h
        self.W = grid.n_history + 1
        self.d = d
        self.m = m
        self._x0V = None
        self._sigma0 = None
        self._b0 = None

    def _measure(self, mV, k0, r, mR, mP):
        rr = r if mR > 1 else 0
        return EmpiricalMeasure(mV[rr * mP:(rr + 1) * mP, k0:k0 + self.W, :], self.h)

    def eval(self, V, k0, mV, mR, mP, R, P):
        L = V.shape[0]
        b = np.empty((L, self.d))
        sig = np.empty((L, self.d, self.m))
        for r in range(R):
            mu = self._measure(mV, k0, r, mR, mP)
            for p in range(P):
                i = r * P + p
                seg = Segment(V[i, k0:k0 + self.W, :], self.h)
                b[i] = eval_b(self.c, seg, mu)
                sig[i] = eval_sigma(self.c, seg, mu)
        return b, sig

    def set_x0(self, x0V, grid: TimeGrid):
        S = grid.n_steps
        self._x0V = x0V
        self._b0 = np.empty((S, self.d))
        self._sigma0 = np.empty((S, self.d, self.m))
        for k in range(S):
            seg = Segment(x0V[0, k:k + self.W, :], self.h)
            mu = EmpiricalMeasure(x0V[:, k:k + self.W, :], self.h)
            self._b0[k] = eval_b(self.c, seg, mu)
            self._sigma0[k] = eval_sigma(self.c, seg, mu)

    def b0(self, k):
        return self._b0[k]

    def sigma0(self, k):
        return self._sigma0[k]

    def lin_drift(self, V, k0, R, P, lions: bool):
        L = V.shape[0]
        seg0 = Segment(self._x0V[0, k0:k0 + self.W, :], self.h)
        mu0 = EmpiricalMeasure(self._x0V[:, k0:k0 + self.W, :], self.h)
        out = np.empty((L, self.d))
        for r in range(R):
            lanes = range(r * P, (r + 1) * P)
            dirs = [Segment(V[i, k0:k0 + self.W, :], self.h) for i in lanes]
            for p, i in enumerate(lanes):
                out[i] = frechet_pairing(self.c, seg0, mu0, dirs[p])
            if lions:
                lterm = lions_pairing(self.c, seg0, [seg0] * P, dirs)
                out[r * P:(r + 1) * P] += lterm
        return out


def _make_adapter(cfg: SimConfig):
    if isinstance(cfg.coefficients, Example5Family):
        if cfg.d != 1 or cfg.m != 1:
            raise ValueError("the parametric scalar family needs d = m = 1")
        return _Example5Batch(cfg.coefficients, cfg.grid)
    return _GenericBatch(cfg.coefficients, cfg.grid, cfg.d, cfg.m)


# ---------------------------------------------------------------------------
# engine loops (lanes = R replicas x P particles)

def _alloc_state(xi_nodes, L, grid):
    W = grid.n_history + 1
    V = np.empty((L, grid.n_nodes, xi_nodes.shape[1]))
    V[:, :W, :] = xi_nodes
    return V

def _control_slice(u_values, k, L):
    # u_values: (S, m) shared or (Lu, S, m) per lane
    if u_values.ndim == 2:
        return np.broadcast_to(u_values[k], (L, u_values.shape[1]))
    return u_values[:, k, :]


def _step_project(op, h, Y, V, idx, Kn, kvar, k):
    if op.kind == "zero":
        V[:, idx + 1, :] = Y
        return
    Xn = apply_resolvent_batch(op, h, np.ascontiguousarray(Y))
    dk = Y - Xn
    kvar += np.sqrt(np.sum(dk * dk, axis=1))
    if Kn is not None:
        Kn[:, k + 1, :] = Kn[:, k, :] + dk
    V[:, idx + 1, :] = Xn


def _run_primal(op, adapter, grid, xi_nodes, R, P, eps, dW=None, u_values=None,
                mV=None, mR=None, mP=None, keep_k=True):
    """Perturbed / controlled / deterministic / skeleton systems.

    mV is the buffer whose segments carry the law fed to the coefficients;
    None means the self law of the advancing particles.
    """
    h, W, S = grid.h, grid.n_history + 1, grid.n_steps
    L = R * P
    V = _alloc_state(xi_nodes, L, grid)
    Kn = np.zeros((L, S + 1, xi_nodes.shape[1])) if (keep_k and op.kind != "zero") else None
    kvar = np.zeros(L)
    sq = np.sqrt(eps)
    for k in range(S):
        idx = W - 1 + k
        if mV is None:
            b, sig = adapter.eval(V, k, V, R, P, R, P)
        else:
            b, sig = adapter.eval(V, k, mV, mR, mP, R, P)
        drift = b
        if u_values is not None:
            uk = _control_slice(u_values, k, L)
            drift = drift + np.einsum("ldm,lm->ld", sig, uk)
        Y = V[:, idx, :] + h * drift
        if dW is not None and eps > 0.0:
            Y = Y + sq * np.einsum("ldm,lm->ld", sig, dW[:, k, :])
        if not np.all(np.isfinite(Y)):
            raise CoefficientEvaluationError(f"non-finite state at step {k}")
        _step_project(op, h, Y, V, idx, Kn, kvar, k)
    return V, Kn, kvar


def _run_deviation(op, adapter, grid, x0V, R, P, eps, scale, dW, u_values=None,
                   mVx=None, keep_k=True):
    """Normalized deviation systems: state M with X = X0 + scale*M rebuilt per step.

    mVx, when given, is the reconstructed-path buffer of an uncontrolled
    companion whose law replaces the self law (controlled variant).
    """
    h, W, S = grid.h, grid.n_history + 1, grid.n_steps
    L = R * P
    d = x0V.shape[2]
    Vm = _alloc_state(np.zeros((W, d)), L, grid)
    Vx = np.empty((L, grid.n_nodes, d))
    Vx[:, :W, :] = x0V[0, :W, :]
    Kn = np.zeros((L, S + 1, d)) if (keep_k and op.kind != "zero") else None
    kvar = np.zeros(L)
    noise_scale = np.sqrt(eps) / scale
    for k in range(S):
        idx = W - 1 + k
        if mVx is None:
            bx, sig = adapter.eval(Vx, k, Vx, R, P, R, P)
        else:
            bx, sig = adapter.eval(Vx, k, mVx, R, P, R, P)
        drift = (bx - adapter.b0(k)) / scale
        if u_values is not None:
            uk = _control_slice(u_values, k, L)
            drift = drift + np.einsum("ldm,lm->ld", sig, uk)
        Y = Vm[:, idx, :] + h * drift + noise_scale * np.einsum(
            "ldm,lm->ld", sig, dW[:, k, :])
        if not np.all(np.isfinite(Y)):
            raise CoefficientEvaluationError(f"non-finite state at step {k}")
        _step_project(op, h, Y, Vm, idx, Kn, kvar, k)
        Vx[:, idx + 1, :] = x0V[0, idx + 1, :] + scale * Vm[:, idx + 1, :]
    return Vm, Kn, kvar


def _run_linearized(op, adapter, grid, x0V, R, P, dW=None, u_values=None,
                    lions=False, keep_k=True):
    """Limit systems driven by derivative pairings along the deterministic path."""
    h, W, S = grid.h, grid.n_history + 1, grid.n_steps
    L = R * P
    d = x0V.shape[2]
    V = _alloc_state(np.zeros((W, d)), L, grid)
    Kn = np.zeros((L, S + 1, d)) if (keep_k and op.kind != "zero") else None
    kvar = np.zeros(L)
    for k in range(S):
        idx = W - 1 + k
        drift = adapter.lin_drift(V, k, R, P, lions)
        sig0 = adapter.sigma0(k)  # (d, m)
        if u_values is not None:
            uk = _control_slice(u_values, k, L)
            drift = drift + np.einsum("dm,lm->ld", sig0, uk)
        Y = V[:, idx, :] + h * drift
        if dW is not None:
            Y = Y + np.einsum("dm,lm->ld", sig0, dW[:, k, :])
        if not np.all(np.isfinite(Y)):
            raise CoefficientEvaluationError(f"non-finite state at step {k}")
        _step_project(op, h, Y, V, idx, Kn, kvar, k)
    return V, Kn, kvar


# ---------------------------------------------------------------------------
# result packaging

def _k_trajectory(grid, Kn_lane):
    vals = np.zeros((grid.n_nodes, Kn_lane.shape[1]))
    vals[grid.n_history:, :] = Kn_lane
    return Trajectory(grid, vals)


def _bundle(grid, V, Kn, kvar, dW):
    P, d = V.shape[0], V.shape[2]
    particles = [Trajectory(grid, V[i]) for i in range(P)]
    if Kn is None:
        Kn = np.zeros((P, grid.n_steps + 1, d))
    ks = [_k_trajectory(grid, Kn[i]) for i in range(P)]
    return SolutionBundle(particles=particles, k_processes=ks,
                          k_variation=kvar.copy(), noise=dW)


def _check_zero_in_domain(op, need_graph_zero):
    zero = np.zeros(op.dimension)
    if need_graph_zero:
        img = op.resolvent(1.0, zero)
        if np.linalg.norm(np.ravel(img)) > 1e-12:
            raise PreconditionError(
                "deviation systems need 0 in D(A) with 0 in A(0)")
    else:
        img = op.domain_project(zero)
        if np.linalg.norm(np.ravel(img) - zero) > 1e-12:
            raise PreconditionError("deviation systems need 0 in closure(D(A))")


# ---------------------------------------------------------------------------
# public solvers

def simulate_perturbed(cfg: SimConfig, noise: np.ndarray = None) -> SolutionBundle:
    """Small-noise particle system: drift b, diffusion sqrt(eps)*sigma, self law."""
    adapter = _make_adapter(cfg)
    S = cfg.grid.n_steps
    dW = noise if noise is not None else brownian_increments(
        cfg.seed, (0,), cfg.P, S, cfg.m, cfg.grid.h)
    V, Kn, kvar = _run_primal(cfg.operator, adapter, cfg.grid, cfg.initial_segment,
                              1, cfg.P, cfg.eps, dW=dW)
    return _bundle(cfg.grid, V, Kn, kvar, dW)


def _check_control(cfg: SimConfig, u: Control):
    if u.values.shape != (cfg.grid.n_steps, cfg.m):
        raise ValueError(
            f"control shape {u.values.shape} does not match "
            f"({cfg.grid.n_steps}, {cfg.m})")


def simulate_controlled(cfg: SimConfig, u: Control, noise: np.ndarray = None) -> SolutionBundle:
    """Controlled system; the coefficient law comes from an uncontrolled companion.

    The companion shares the driving noise when cfg.couple_companion is set
    (then u = 0 reproduces simulate_perturbed pathwise), otherwise it runs on
    an independent stream.
    """
    adapter = _make_adapter(cfg)
    S = cfg.grid.n_steps
    _check_control(cfg, u)
    dW = noise if noise is not None else brownian_increments(
        cfg.seed, (0,), cfg.P, S, cfg.m, cfg.grid.h)
    dW_comp = dW if cfg.couple_companion else brownian_increments(
        cfg.seed, (1,), cfg.P, S, cfg.m, cfg.grid.h)
    V_comp, _, _ = _run_primal(cfg.operator, adapter, cfg.grid, cfg.initial_segment,
                               1, cfg.P, cfg.eps, dW=dW_comp, keep_k=False)
    V, Kn, kvar = _run_primal(cfg.operator, adapter, cfg.grid, cfg.initial_segment,
                              1, cfg.P, cfg.eps, dW=dW, u_values=u.values,
                              mV=V_comp, mR=1, mP=cfg.P)
    return _bundle(cfg.grid, V, Kn, kvar, dW)


def solve_deterministic_limit(cfg: SimConfig):
    """Zero-noise limit path with its own one-atom law; returns (X0, K0, |K0|)."""
    adapter = _make_adapter(cfg)
    V, Kn, kvar = _run_primal(cfg.operator, adapter, cfg.grid, cfg.initial_segment,
                              1, 1, 0.0)
    bundle = _bundle(cfg.grid, V, Kn, kvar, np.zeros((1, cfg.grid.n_steps, cfg.m)))
    return bundle.particles[0], bundle.k_processes[0], float(kvar[0])


def _x0_buffer(cfg, x0):
    if x0 is None:
        x0, _, _ = solve_deterministic_limit(cfg)
    if isinstance(x0, Trajectory):
        arr = x0.values
    else:
        arr = np.asarray(x0, dtype=float)
    return np.ascontiguousarray(arr[None, :, :])


def solve_skeleton(cfg: SimConfig, u: Control, x0=None) -> Trajectory:
    """Deterministic controlled path with the limit's one-atom law."""
    _check_control(cfg, u)
    adapter = _make_adapter(cfg)
    x0V = _x0_buffer(cfg, x0)
    V, _, _ = _run_primal(cfg.operator, adapter, cfg.grid, cfg.initial_segment,
                          1, 1, 0.0, u_values=u.values, mV=x0V, mR=1, mP=1,
                          keep_k=False)
    return Trajectory(cfg.grid, V[0])


def simulate_mdp_deviation(cfg: SimConfig, u: Control = None, x0=None,
                           noise: np.ndarray = None) -> SolutionBundle:
    """Moderate-deviation auxiliary system in the normalized variable.

    State starts at zero on [-r0, 0]; requires eps > 0, an a(eps) rule and
    0 in D(A) with 0 in A(0).  With a control the companion (uncontrolled)
    deviation system supplies the law, mirroring the controlled equation.
    """
    if cfg.eps <= 0:
        raise PreconditionError("deviation simulation needs eps > 0")
    a = cfg.a_eps()
    if u is not None:
        _check_control(cfg, u)
    _check_zero_in_domain(cfg.operator, need_graph_zero=True)
    adapter = _make_adapter(cfg)
    x0V = _x0_buffer(cfg, x0)
    adapter.set_x0(x0V, cfg.grid)
    S = cfg.grid.n_steps
    dW = noise if noise is not None else brownian_increments(
        cfg.seed, (2,), cfg.P, S, cfg.m, cfg.grid.h)
    mVx = None
    if u is not None:
        dW_comp = dW if cfg.couple_companion else brownian_increments(
            cfg.seed, (3,), cfg.P, S, cfg.m, cfg.grid.h)
        Vm_c, _, _ = _run_deviation(cfg.operator, adapter, cfg.grid, x0V, 1, cfg.P,
                                    cfg.eps, a, dW_comp, keep_k=False)
        mVx = x0V + a * Vm_c
    V, Kn, kvar = _run_deviation(cfg.operator, adapter, cfg.grid, x0V, 1, cfg.P,
                                 cfg.eps, a, dW,
                                 u_values=None if u is None else u.values,
                                 mVx=mVx)
    return _bundle(cfg.grid, V, Kn, kvar, dW)


def solve_mdp_skeleton(cfg: SimConfig, u: Control, x0=None) -> Trajectory:
    """Deterministic moderate-deviation skeleton from the Frechet pairing drift."""
    _check_control(cfg, u)
    adapter = _make_adapter(cfg)
    x0V = _x0_buffer(cfg, x0)
    adapter.set_x0(x0V, cfg.grid)
    V, _, _ = _run_linearized(cfg.operator, adapter, cfg.grid, x0V, 1, 1,
                              u_values=u.values, lions=False, keep_k=False)
    return Trajectory(cfg.grid, V[0])


def simulate_clt_pair(cfg: SimConfig, x0=None, noise: np.ndarray = None):
    """Coupled (Z^eps, Z): the sqrt(eps)-normalized deviation and its limit.

    Both systems are driven by the identical Brownian increments and both
    pass through the resolvent; the limit drift adds the averaged intrinsic
    measure-derivative term over the particle cloud.
    """
    if cfg.eps <= 0:
        raise PreconditionError("deviation simulation needs eps > 0")
    _check_zero_in_domain(cfg.operator, need_graph_zero=False)
    adapter = _make_adapter(cfg)
    x0V = _x0_buffer(cfg, x0)
    adapter.set_x0(x0V, cfg.grid)
    S = cfg.grid.n_steps
    dW = noise if noise is not None else brownian_increments(
        cfg.seed, (4,), cfg.P, S, cfg.m, cfg.grid.h)
    scale = np.sqrt(cfg.eps)
    Vz_eps, Kn_e, kvar_e = _run_deviation(cfg.operator, adapter, cfg.grid, x0V,
                                          1, cfg.P, cfg.eps, scale, dW)
    Vz, Kn_l, kvar_l = _run_linearized(cfg.operator, adapter, cfg.grid, x0V,
                                       1, cfg.P, dW=dW, lions=True)
    return (_bundle(cfg.grid, Vz_eps, Kn_e, kvar_e, dW),
            _bundle(cfg.grid, Vz, Kn_l, kvar_l, dW))


def export_bundle(bundle: SolutionBundle, outdir, metadata: dict = None):
    """Write one trajectory CSV per particle plus K files and a JSON header."""
    import json
    import os

    from mvsde.paths import trajectory_to_csv

    os.makedirs(outdir, exist_ok=True)
    for i, (x, k) in enumerate(zip(bundle.particles, bundle.k_processes)):
        trajectory_to_csv(x, os.path.join(outdir, f"particle_{i:04d}.csv"))
        trajectory_to_csv(k, os.path.join(outdir, f"k_{i:04d}.csv"))
    header = {
        "particles": bundle.P,
        "k_variation": [float(v) for v in bundle.k_variation],
    }
    header.update(metadata or {})
    path = os.path.join(outdir, "run.json")
    with open(path, "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
    return path


# ---------------------------------------------------------------------------
# batched entry points for Monte Carlo studies and optimizers

def batch_perturbed(cfg: SimConfig, replicas: int, stream: tuple,
                    eps: float = None) -> np.ndarray:
    """State buffer (replicas*P, n_nodes, d) of independent particle systems."""
    adapter = _make_adapter(cfg)
    e = cfg.eps if eps is None else eps
    dW = brownian_increments(cfg.seed, stream, replicas * cfg.P,
                             cfg.grid.n_steps, cfg.m, cfg.grid.h)
    V, _, _ = _run_primal(cfg.operator, adapter, cfg.grid, cfg.initial_segment,
                          replicas, cfg.P, e, dW=dW, keep_k=False)
    return V


def batch_mdp_deviation(cfg: SimConfig, replicas: int, stream: tuple,
                        eps: float, x0V=None) -> np.ndarray:
    adapter = _make_adapter(cfg)
    if x0V is None:
        x0V = _x0_buffer(cfg, None)
    adapter.set_x0(x0V, cfg.grid)
    a = float(eps) ** cfg.a_eps_gamma
    dW = brownian_increments(cfg.seed, stream, replicas * cfg.P,
                             cfg.grid.n_steps, cfg.m, cfg.grid.h)
    Vm, _, _ = _run_deviation(cfg.operator, adapter, cfg.grid, x0V, replicas,
                              cfg.P, eps, a, dW, keep_k=False)
    return Vm


def batch_clt_pair(cfg: SimConfig, replicas: int, stream: tuple, eps: float,
                   x0V=None):
    adapter = _make_adapter(cfg)
    if x0V is None:
        x0V = _x0_buffer(cfg, None)
    adapter.set_x0(x0V, cfg.grid)
    dW = brownian_increments(cfg.seed, stream, replicas * cfg.P,
                             cfg.grid.n_steps, cfg.m, cfg.grid.h)
    scale = np.sqrt(eps)
    Vz_eps, _, _ = _run_deviation(cfg.operator, adapter, cfg.grid, x0V, replicas,
                                  cfg.P, eps, scale, dW, keep_k=False)
    Vz, _, _ = _run_linearized(cfg.operator, adapter, cfg.grid, x0V, replicas,
                               cfg.P, dW=dW, lions=True, keep_k=False)
    return Vz_eps, Vz


def batch_skeleton(cfg: SimConfig, u_batch: np.ndarray, x0=None,
                   kind: str = "ldp") -> np.ndarray:
    """Deterministic skeleton paths for a batch of controls (B, S, m)."""
    adapter = _make_adapter(cfg)
    x0V = _x0_buffer(cfg, x0)
    B = u_batch.shape[0]
    if kind == "ldp":
        V, _, _ = _run_primal(cfg.operator, adapter, cfg.grid, cfg.initial_segment,
                              B, 1, 0.0, u_values=u_batch, mV=x0V, mR=1, mP=1,
                              keep_k=False)
    elif kind == "mdp":
        adapter.set_x0(x0V, cfg.grid)
        V, _, _ = _run_linearized(cfg.operator, adapter, cfg.grid, x0V, B, 1,
                                  u_values=u_batch, lions=False, keep_k=False)
    else:
        raise ValueError(f"unknown skeleton kind {kind!r}")
    return V
