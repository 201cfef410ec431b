"""Maximal monotone operators exposed through resolvents and domain projections.

Built-ins cover the zero operator, normal cones of boxes / half-spaces /
Euclidean balls, 1-d subdifferentials of piecewise-quadratic convex functions
restricted to an interval, and coordinatewise products.  All built-in
resolvents are exact closed forms, so the backward-Euler split step inherits
their nonexpansiveness and graph properties up to rounding.

User operators supply `resolvent` (and optionally `graph_sample`) directly;
they run through a per-point fallback path in the batch solvers.
"""

from dataclasses import dataclass, field

import numpy as np

from mvsde import kernels
from mvsde.errors import OperatorFailure, UnsupportedCheck


@dataclass(frozen=True)
class MonotoneOperator:
    dimension: int
    resolvent: callable  # (lam, x) -> point of closure(D(A))
    domain_project: callable  # x -> nearest point of closure(D(A))
    graph_sample: callable = None  # rng -> (x, y) with y in A(x)
    interior_point: np.ndarray = None
    kind: str = "user"
    params: dict = field(default_factory=dict)

    @property
    def lam_independent(self):
        """True when the resolvent is a metric projection (normal cones)."""
        if self.kind in ("zero", "box", "halfspace", "ball"):
            return True
        if self.kind == "product":
            return all(f.lam_independent for f in self.params["factors"])
        if self.kind == "quad1d":
            return self.params["q"] == 0.0 and self.params["p"] == 0.0
        return False


def apply_resolvent_batch(op: MonotoneOperator, lam: float, x: np.ndarray) -> np.ndarray:
    """Resolvent applied to a batch of states, shape (L, d) -> (L, d).

    Built-in kinds dispatch to the array kernels; the zero operator returns
    its input unchanged so K increments vanish exactly.
    """
    kind = op.kind
    if kind == "zero":
        return x
    if kind == "box":
        return kernels.project_box(x, op.params["lo"], op.params["hi"])
    if kind == "halfspace":
        return kernels.project_halfspace(x, op.params["a"], op.params["c"])
    if kind == "ball":
        return kernels.project_ball(x, op.params["center"], op.params["radius"])
    if kind == "quad1d":
        p = op.params
        return kernels.prox_interval_quad(x, lam, p["qv"], p["pv"], p["lov"], p["hiv"])
    if kind == "product":
        out = np.empty_like(x)
        j = 0
        for f in op.params["factors"]:
            out[:, j:j + f.dimension] = apply_resolvent_batch(
                f, lam, np.ascontiguousarray(x[:, j:j + f.dimension])
            )
            j += f.dimension
        return out
    # user-supplied operator: per-point loop
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        out[i] = op.resolvent(lam, x[i])
    if not np.all(np.isfinite(out)):
        raise OperatorFailure("resolvent produced non-finite values", lam=lam, x=x)
    return out


def apply_domain_project_batch(op: MonotoneOperator, x: np.ndarray) -> np.ndarray:
    """Nearest-point projection onto closure(D(A)) for a batch of states."""
    kind = op.kind
    if kind == "zero":
        return x
    if kind in ("box", "halfspace", "ball"):
        return apply_resolvent_batch(op, 1.0, x)
    if kind == "quad1d":
        p = op.params
        return kernels.project_box(x, p["lov"], p["hiv"])
    if kind == "product":
        out = np.empty_like(x)
        j = 0
        for f in op.params["factors"]:
            out[:, j:j + f.dimension] = apply_domain_project_batch(
                f, np.ascontiguousarray(x[:, j:j + f.dimension]))
            j += f.dimension
        return out
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        out[i] = op.domain_project(x[i])
    return out


def _builtin(kind, dimension, params, interior_point, batch):
    """Assemble a built-in operator around its batch resolvent closure."""

    def resolvent(lam, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return batch(float(lam), x[None, :])[0]

    op = MonotoneOperator(
        dimension=dimension,
        resolvent=resolvent,
        domain_project=None,
        graph_sample=None,
        interior_point=interior_point,
        kind=kind,
        params=params,
    )

    def project(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return apply_domain_project_batch(op, x[None, :])[0]

    def sample(rng):
        # Yosida recipe: (R_lam(z), (z - R_lam(z))/lam) lies in Gr(A)
        z = rng.normal(0.0, 2.0, size=dimension)
        lam = float(rng.uniform(0.05, 2.0))
        xn = op.resolvent(lam, z)
        return xn, (z - xn) / lam

    object.__setattr__(op, "domain_project", project)
    object.__setattr__(op, "graph_sample", sample)
    return op


def zero_operator(dimension: int) -> MonotoneOperator:
    """A(x) = {0}; resolvent is the identity."""
    return _builtin("zero", dimension, {}, np.zeros(dimension), lambda lam, xs: xs)


def normal_cone_box(lo, hi) -> MonotoneOperator:
    """Normal cone of the box [lo, hi] (entries may be +-inf)."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if lo.shape != hi.shape or np.any(lo > hi):
        raise ValueError("invalid box bounds")
    interior = np.where(
        np.isfinite(lo) & np.isfinite(hi), (lo + hi) / 2.0,
        np.where(np.isfinite(lo), lo + 1.0, np.where(np.isfinite(hi), hi - 1.0, 0.0)),
    )
    degenerate = bool(np.any(lo == hi))
    return _builtin(
        "box", lo.shape[0], {"lo": lo, "hi": hi},
        None if degenerate else interior,
        lambda lam, xs: kernels.project_box(xs, lo, hi),
    )


def normal_cone_halfspace(a, c: float) -> MonotoneOperator:
    """Normal cone of {x : <a, x> <= c}."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if not np.any(a != 0.0):
        raise ValueError("halfspace normal must be nonzero")
    c = float(c)
    interior = (c - 1.0) * a / (a @ a)
    return _builtin(
        "halfspace", a.shape[0], {"a": a, "c": c}, interior,
        lambda lam, xs: kernels.project_halfspace(xs, a, c),
    )


def normal_cone_ball(center, radius: float) -> MonotoneOperator:
    """Normal cone of the closed Euclidean ball."""
    center = np.atleast_1d(np.asarray(center, dtype=float))
    radius = float(radius)
    if radius <= 0:
        raise ValueError("radius must be positive")
    return _builtin(
        "ball", center.shape[0], {"center": center, "radius": radius}, center.copy(),
        lambda lam, xs: kernels.project_ball(xs, center, radius),
    )


def subdifferential_1d(quad: float = 0.0, linear: float = 0.0,
                       interval=(-np.inf, np.inf)) -> MonotoneOperator:
    """Subdifferential of phi(x) = quad*x^2/2 + linear*x + indicator(interval).

    The resolvent solves y + lam*(quad*y + linear) + lam*N_interval(y) = x,
    i.e. clip((x - lam*linear)/(1 + lam*quad), interval).
    """
    q = float(quad)
    p = float(linear)
    if q < 0:
        raise ValueError("quadratic coefficient must be >= 0 for convexity")
    lo, hi = float(interval[0]), float(interval[1])
    if lo > hi:
        raise ValueError("empty interval")
    params = {
        "q": q, "p": p, "lo": lo, "hi": hi,
        "qv": np.array([q]), "pv": np.array([p]),
        "lov": np.array([lo]), "hiv": np.array([hi]),
    }
    if np.isfinite(lo) and np.isfinite(hi):
        interior = np.array([(lo + hi) / 2.0]) if lo < hi else None
    elif np.isfinite(lo):
        interior = np.array([lo + 1.0])
    elif np.isfinite(hi):
        interior = np.array([hi - 1.0])
    else:
        interior = np.array([0.0])
    return _builtin(
        "quad1d", 1, params, interior,
        lambda lam, xs: kernels.prox_interval_quad(
            xs, lam, params["qv"], params["pv"], params["lov"], params["hiv"]),
    )


def product_operator(factors) -> MonotoneOperator:
    """Coordinatewise product of 1-d operators."""
    factors = list(factors)
    if not factors:
        raise ValueError("need at least one factor")
    for f in factors:
        if f.dimension != 1:
            raise ValueError("product factors must be one-dimensional")
    d = len(factors)
    interior = None
    if all(f.interior_point is not None for f in factors):
        interior = np.concatenate([f.interior_point for f in factors])
    op = _builtin("product", d, {"factors": factors}, interior, None)

    def resolvent(lam, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return apply_resolvent_batch(op, float(lam), x[None, :])[0]

    object.__setattr__(op, "resolvent", resolvent)
    return op


def resolvent_step(op: MonotoneOperator, lam: float, x):
    """One backward-Euler split step: x_new = R_lam(x), dk = x - x_new.

    dk/lam lies in A(x_new) (the Yosida approximation at x), so accumulated
    dk's form the bounded-variation reflection term.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_new = np.asarray(op.resolvent(lam, x), dtype=float)
    if not np.all(np.isfinite(x_new)):
        raise OperatorFailure("resolvent produced non-finite values", lam=lam, x=x)
    return x_new, x - x_new


def check_monotone(op: MonotoneOperator, n_samples: int, rng_seed: int,
                   tolerance: float = 1e-10):
    """Sample graph pairs and report the minimal monotone pairing.

    Returns a dict with `min_pairing` and a `flagged` bit set when the
    pairing drops below -tolerance (anti-monotone witness).
    """
    if op.graph_sample is None:
        raise UnsupportedCheck("operator has no graph_sample")
    rng = np.random.default_rng(rng_seed)
    min_pairing = np.inf
    for _ in range(n_samples):
        x1, y1 = op.graph_sample(rng)
        x2, y2 = op.graph_sample(rng)
        pairing = float(np.dot(np.ravel(x1) - np.ravel(x2), np.ravel(y1) - np.ravel(y2)))
        min_pairing = min(min_pairing, pairing)
    return {
        "min_pairing": min_pairing,
        "flagged": min_pairing < -tolerance,
        "tolerance": tolerance,
        "n_samples": n_samples,
    }


def operator_from_config(record: dict) -> MonotoneOperator:
    """Build an operator from its tagged config record."""
    kind = record["kind"]
    if kind == "zero":
        return zero_operator(int(record["dimension"]))
    if kind == "box":
        return normal_cone_box(record["lo"], record["hi"])
    if kind == "halfspace":
        return normal_cone_halfspace(record["a"], record["c"])
    if kind == "ball":
        return normal_cone_ball(record["center"], record["radius"])
    if kind == "subdiff1d":
        return subdifferential_1d(
            quad=record.get("quad", 0.0),
            linear=record.get("linear", 0.0),
            interval=tuple(record.get("interval", (-np.inf, np.inf))),
        )
    if kind == "product":
        return product_operator([operator_from_config(r) for r in record["factors"]])
    raise ValueError(f"unknown operator kind {kind!r}")
