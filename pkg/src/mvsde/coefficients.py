"""Coefficient pairs (b, sigma) on segment x measure space.

The configurable family follows the scalar functional pattern

    b(zeta, mu)   = s_f(c0 + C1*zeta(0) + C2*zeta(-r0) + C3*(1/r0)*int(zeta)
                        applied to zeta + alpha*mean_atoms + beta)
    sigma(zeta, mu) = s_g(same functional of zeta alone)

with nonlinearity s in {identity, tanh} and the measure entering through the
atom-wise affine map u -> alpha*u + beta averaged over the empirical measure.
Its path (Frechet) and measure (push-forward / intrinsic) derivatives have
closed forms; generic coefficient sets fall back to finite differences.

The segment integral uses the trapezoid rule, exact for piecewise-linear
node data.
"""

from dataclasses import dataclass

import numpy as np

from mvsde.errors import CoefficientEvaluationError
from mvsde.measures import EmpiricalMeasure, second_moment, w2_assignment
from mvsde.paths import Segment, sup_norm


@dataclass(frozen=True)
class CoefficientSet:
    """Drift/diffusion maps with optional derivative providers.

    b(segment, measure) -> (d,) array, sigma(segment, measure) -> (d, m);
    frechet_b(segment, measure, direction) and
    lions_b(segment, atom_segments, direction_segments) are closed-form
    derivative pairings when available.
    """

    b: callable
    sigma: callable
    frechet_b: callable = None
    lions_b: callable = None


def eval_b(c: CoefficientSet, zeta: Segment, mu: EmpiricalMeasure) -> np.ndarray:
    out = np.atleast_1d(np.asarray(c.b(zeta, mu), dtype=float))
    if not np.all(np.isfinite(out)):
        raise CoefficientEvaluationError(f"b returned non-finite value {out!r}")
    return out


def eval_sigma(c: CoefficientSet, zeta: Segment, mu: EmpiricalMeasure) -> np.ndarray:
    out = np.atleast_2d(np.asarray(c.sigma(zeta, mu), dtype=float))
    if not np.all(np.isfinite(out)):
        raise CoefficientEvaluationError(f"sigma returned non-finite value {out!r}")
    return out


def _fd_step(zeta: Segment, direction_norm: float) -> float:
    # balances truncation and rounding near machine precision
    return 1e-5 * (1.0 + sup_norm(zeta)) / (1.0 + direction_norm)


def frechet_pairing(c: CoefficientSet, zeta: Segment, mu: EmpiricalMeasure,
                    v: Segment) -> np.ndarray:
    """Directional path derivative <Db(zeta, mu), v>.

    Uses the closed form when the set provides one, otherwise a central
    finite difference along the direction.
    """
    if c.frechet_b is not None:
        return np.atleast_1d(np.asarray(c.frechet_b(zeta, mu, v), dtype=float))
    delta = _fd_step(zeta, sup_norm(v))
    up = eval_b(c, zeta + delta * v, mu)
    dn = eval_b(c, zeta - delta * v, mu)
    return (up - dn) / (2.0 * delta)


def lions_pairing(c: CoefficientSet, zeta: Segment, atoms, directions) -> np.ndarray:
    """Measure derivative pairing E[<D^L b(zeta, mu)(.), .>] at an empirical mu.

    atoms and directions are equal-length segment lists; the fallback
    differentiates b along the push-forward mu o (Id + delta*phi)^{-1}
    realized by shifting each atom along its direction (central difference).
    """
    atoms = list(atoms)
    directions = list(directions)
    if len(atoms) != len(directions):
        raise ValueError("atoms and directions must have equal length")
    if c.lions_b is not None:
        return np.atleast_1d(np.asarray(c.lions_b(zeta, atoms, directions), dtype=float))
    dir_norm = max((sup_norm(w) for w in directions), default=0.0)
    delta = _fd_step(zeta, dir_norm)
    up = EmpiricalMeasure.from_segments([a + delta * w for a, w in zip(atoms, directions)])
    dn = EmpiricalMeasure.from_segments([a - delta * w for a, w in zip(atoms, directions)])
    return (eval_b(c, zeta, up) - eval_b(c, zeta, dn)) / (2.0 * delta)


# ---------------------------------------------------------------------------
# configurable family

_NONLINEARITIES = {
    "identity": (lambda x: x, lambda x: np.ones_like(np.asarray(x, dtype=float))),
    "tanh": (np.tanh, lambda x: 1.0 - np.tanh(x) ** 2),
}


def functional_weights(n_nodes: int, h: float, C1: float, C2: float, C3: float) -> np.ndarray:
    """Node weights of C1*v(0) + C2*v(-r0) + (C3/r0) * trapezoid(v)."""
    if n_nodes < 2:
        raise ValueError("segment needs at least two nodes")
    r0 = (n_nodes - 1) * h
    w = np.full(n_nodes, C3 / r0 * h)
    w[0] *= 0.5
    w[-1] *= 0.5
    w[0] += C2
    w[-1] += C1
    return w


@dataclass(frozen=True)
class FunctionalParams:
    s: str = "identity"
    c0: float = 0.0
    C1: float = 0.0
    C2: float = 0.0
    C3: float = 0.0

    def weights(self, n_nodes, h):
        return functional_weights(n_nodes, h, self.C1, self.C2, self.C3)

    @property
    def weight_of_constants(self):
        # the functional applied to the constant segment 1
        return self.C1 + self.C2 + self.C3

    @property
    def s_fn(self):
        return _NONLINEARITIES[self.s][0]

    @property
    def s_prime(self):
        return _NONLINEARITIES[self.s][1]


@dataclass(frozen=True)
class Example5Family(CoefficientSet):
    """Scalar (d = m = 1) family with affine atom coupling phi(u) = alpha*u + beta."""

    f: FunctionalParams = FunctionalParams()
    g: FunctionalParams = FunctionalParams()
    alpha: float = 0.0
    beta: float = 0.0

    def __init__(self, f=FunctionalParams(), g=FunctionalParams(),
                 alpha=0.0, beta=0.0):
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "alpha", float(alpha))
        object.__setattr__(self, "beta", float(beta))
        super().__init__(
            b=self._b, sigma=self._sigma,
            frechet_b=self._frechet, lions_b=self._lions,
        )

    def _ell(self, params, values, h):
        w = params.weights(values.shape[0], h)
        return float(w @ values[:, 0])

    def drift_argument(self, zeta: Segment, mu: EmpiricalMeasure) -> float:
        """The scalar fed to s_f: functional of zeta + mean of phi over atoms."""
        arg = self.f.c0 + self._ell(self.f, zeta.values, zeta.h)
        if self.alpha != 0.0 or self.beta != 0.0:
            arg += self.alpha * self._ell(self.f, mu.mean_values(), mu.h)
            arg += self.beta * self.f.weight_of_constants
        return arg

    def _b(self, zeta, mu):
        return np.array([self.f.s_fn(self.drift_argument(zeta, mu))])

    def _sigma(self, zeta, mu):
        arg = self.g.c0 + self._ell(self.g, zeta.values, zeta.h)
        return np.array([[self.g.s_fn(arg)]])

    def _frechet(self, zeta, mu, v):
        sp = self.f.s_prime(self.drift_argument(zeta, mu))
        return np.array([sp * self._ell(self.f, v.values, v.h)])

    def _lions(self, zeta, atoms, directions):
        mu = EmpiricalMeasure.from_segments(atoms)
        sp = self.f.s_prime(self.drift_argument(zeta, mu))
        mean_dir = np.mean([w.values for w in directions], axis=0)
        return np.array([sp * self.alpha * self._ell(self.f, mean_dir, directions[0].h)])


def coefficients_from_config(record: dict) -> Example5Family:
    """Parametric family from its config block {f: {...}, g: {...}, phi: {...}}."""

    def fp(block):
        block = dict(block or {})
        return FunctionalParams(
            s=block.get("s", "identity"),
            c0=float(block.get("c0", 0.0)),
            C1=float(block.get("C1", 0.0)),
            C2=float(block.get("C2", 0.0)),
            C3=float(block.get("C3", 0.0)),
        )

    phi = dict(record.get("phi") or {})
    return Example5Family(
        f=fp(record.get("f")),
        g=fp(record.get("g")),
        alpha=float(phi.get("alpha", 0.0)),
        beta=float(phi.get("beta", 0.0)),
    )


# ---------------------------------------------------------------------------
# hypothesis checkers

def _sample_segment(rng, width, d, h, scale):
    # random walk nodes: rough paths with sup norm on the order of `scale`
    steps = rng.normal(0.0, scale / np.sqrt(width), size=(width, d))
    vals = np.cumsum(steps, axis=0) + rng.normal(0.0, scale, size=(1, d))
    return Segment(vals, h)


def _sample_input(rng, width, d, h, scale, n_atoms):
    zeta = _sample_segment(rng, width, d, h, scale)
    atoms = [_sample_segment(rng, width, d, h, scale) for _ in range(n_atoms)]
    return zeta, EmpiricalMeasure.from_segments(atoms)


def check_growth(c: CoefficientSet, n_samples: int, rng_seed: int, *,
                 width: int = 11, d: int = 1, h: float = 0.1, n_atoms: int = 4,
                 scales=(1.0, 2.0, 4.0, 8.0), divergence_factor: float = 10.0):
    """Empirical linear-growth constant: max of (|b|^2+|sigma|^2)/(1+||zeta||^2+mu(||.||^2)).

    Sampled over widening input ranges; the estimate is reported, not
    asserted.  `flagged_unbounded` is set when the per-scale maxima keep
    growing by more than `divergence_factor` across the sweep, the witness
    pattern of super-linear growth.
    """
    rng = np.random.default_rng(rng_seed)
    per_scale = []
    for scale in scales:
        worst = 0.0
        for _ in range(max(1, n_samples // len(scales))):
            zeta, mu = _sample_input(rng, width, d, h, scale, n_atoms)
            bb = eval_b(c, zeta, mu)
            ss = eval_sigma(c, zeta, mu)
            num = float(bb @ bb + np.sum(ss * ss))
            den = 1.0 + sup_norm(zeta) ** 2 + second_moment(mu)
            worst = max(worst, num / den)
        per_scale.append(worst)
    estimate = max(per_scale)
    flagged = per_scale[0] > 0 and per_scale[-1] / max(per_scale[0], 1e-300) > divergence_factor \
        and all(b >= a for a, b in zip(per_scale, per_scale[1:]))
    return {"estimate": estimate, "per_scale": per_scale, "flagged_unbounded": bool(flagged)}


def check_lipschitz(c: CoefficientSet, n_samples: int, rng_seed: int, *,
                    width: int = 11, d: int = 1, h: float = 0.1, n_atoms: int = 4,
                    scale: float = 2.0):
    """Empirical Lipschitz constant of (b, sigma) in (sup norm, W2)."""
    rng = np.random.default_rng(rng_seed)
    worst = 0.0
    for _ in range(n_samples):
        zeta, mu = _sample_input(rng, width, d, h, scale, n_atoms)
        eta, nu = _sample_input(rng, width, d, h, scale, n_atoms)
        db = eval_b(c, zeta, mu) - eval_b(c, eta, nu)
        ds = eval_sigma(c, zeta, mu) - eval_sigma(c, eta, nu)
        num = max(float(db @ db), float(np.sum(ds * ds)))
        den = sup_norm(zeta - eta) ** 2 + w2_assignment(mu, nu) ** 2
        if den > 1e-14:
            worst = max(worst, num / den)
    return {"estimate": worst, "n_samples": n_samples}
