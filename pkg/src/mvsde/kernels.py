"""Hot array primitives with numba builds and pure-numpy fallbacks.

Every kernel exists twice: a vectorized numpy version (``*_np``) and an
``@njit`` loop version (``*_nb``).  The active set is chosen at import time:
numba is used when importable unless the environment variable
``MVSDE_NUMBA`` is set to ``0``.  ``benchmarks/bench_kernels.py`` times the
two builds against each other.

All kernels take contiguous float64 arrays with lanes on the leading axis:
states are ``(L, d)``, path buffers ``(L, n, d)``.
"""

import os

import numpy as np

_WANT_NUMBA = os.environ.get("MVSDE_NUMBA", "1") != "0"

if _WANT_NUMBA:
    try:
        from numba import njit

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# numpy builds

def project_box_np(x, lo, hi):
    return np.minimum(np.maximum(x, lo), hi)


def project_halfspace_np(x, a, c):
    # projection onto {y : <a, y> <= c}
    viol = x @ a - c
    scale = np.maximum(viol, 0.0) / (a @ a)
    return x - scale[..., None] * a


def project_ball_np(x, center, radius):
    diff = x - center
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    scale = np.where(dist > radius, radius / np.where(dist > 0.0, dist, 1.0), 1.0)
    return center + scale[..., None] * diff


def prox_interval_quad_np(x, lam, q, p, lo, hi):
    # coordinatewise resolvent of q*y^2/2 + p*y + indicator([lo, hi])
    return np.minimum(np.maximum((x - lam * p) / (1.0 + lam * q), lo), hi)


def window_dot_np(values, k0, w):
    # sum_j w[j] * values[:, k0+j, :]  ->  (L, d)
    win = values[:, k0:k0 + w.shape[0], :]
    return np.einsum("lwd,w->ld", win, w)


def window_sup_np(values, k0, width):
    # max over the window of euclidean node norms  ->  (L,)
    win = values[:, k0:k0 + width, :]
    return np.sqrt(np.max(np.sum(win * win, axis=2), axis=1))


def path_sup_distance_np(a, b):
    # max over nodes of |a-b|  per lane, (L, n, d) x (L or 1, n, d) -> (L,)
    diff = a - b
    return np.sqrt(np.max(np.sum(diff * diff, axis=2), axis=1))


def pairwise_sq_supdist_np(a, b):
    # squared sup-norm distances between all atom pairs, (P,W,d) x (Q,W,d) -> (P,Q)
    diff = a[:, None, :, :] - b[None, :, :, :]
    return np.max(np.sum(diff * diff, axis=3), axis=2)


# ---------------------------------------------------------------------------
# numba builds

if HAVE_NUMBA:

    @njit(cache=True)
    def project_box_nb(x, lo, hi):
        L, d = x.shape
        out = np.empty_like(x)
        for i in range(L):
            for j in range(d):
                v = x[i, j]
                if v < lo[j]:
                    v = lo[j]
                elif v > hi[j]:
                    v = hi[j]
                out[i, j] = v
        return out

    @njit(cache=True)
    def project_halfspace_nb(x, a, c):
        L, d = x.shape
        aa = 0.0
        for j in range(d):
            aa += a[j] * a[j]
        out = np.empty_like(x)
        for i in range(L):
            s = 0.0
            for j in range(d):
                s += x[i, j] * a[j]
            if s > c:
                t = (s - c) / aa
                for j in range(d):
                    out[i, j] = x[i, j] - t * a[j]
            else:
                for j in range(d):
                    out[i, j] = x[i, j]
        return out

    @njit(cache=True)
    def project_ball_nb(x, center, radius):
        L, d = x.shape
        out = np.empty_like(x)
        for i in range(L):
            s = 0.0
            for j in range(d):
                diff = x[i, j] - center[j]
                s += diff * diff
            dist = np.sqrt(s)
            if dist > radius:
                t = radius / dist
                for j in range(d):
                    out[i, j] = center[j] + t * (x[i, j] - center[j])
            else:
                for j in range(d):
                    out[i, j] = x[i, j]
        return out

    @njit(cache=True)
    def prox_interval_quad_nb(x, lam, q, p, lo, hi):
        L, d = x.shape
        out = np.empty_like(x)
        for i in range(L):
            for j in range(d):
                v = (x[i, j] - lam * p[j]) / (1.0 + lam * q[j])
                if v < lo[j]:
                    v = lo[j]
                elif v > hi[j]:
                    v = hi[j]
                out[i, j] = v
        return out

    @njit(cache=True)
    def window_dot_nb(values, k0, w):
        L = values.shape[0]
        d = values.shape[2]
        W = w.shape[0]
        out = np.zeros((L, d))
        if d == 1:
            for i in range(L):
                acc = 0.0
                for k in range(W):
                    acc += w[k] * values[i, k0 + k, 0]
                out[i, 0] = acc
        else:
            for i in range(L):
                for j in range(d):
                    acc = 0.0
                    for k in range(W):
                        acc += w[k] * values[i, k0 + k, j]
                    out[i, j] = acc
        return out

    @njit(cache=True)
    def window_sup_nb(values, k0, width):
        L = values.shape[0]
        d = values.shape[2]
        out = np.empty(L)
        for i in range(L):
            best = 0.0
            for k in range(width):
                s = 0.0
                for j in range(d):
                    v = values[i, k0 + k, j]
                    s += v * v
                if s > best:
                    best = s
            out[i] = np.sqrt(best)
        return out

    @njit(cache=True)
    def path_sup_distance_nb(a, b):
        L, n, d = a.shape
        Lb = b.shape[0]
        out = np.empty(L)
        for i in range(L):
            ib = i if Lb > 1 else 0
            best = 0.0
            for k in range(n):
                s = 0.0
                for j in range(d):
                    diff = a[i, k, j] - b[ib, k, j]
                    s += diff * diff
                if s > best:
                    best = s
            out[i] = np.sqrt(best)
        return out

    @njit(cache=True)
    def pairwise_sq_supdist_nb(a, b):
        P, W, d = a.shape
        Q = b.shape[0]
        out = np.empty((P, Q))
        for p in range(P):
            for q in range(Q):
                best = 0.0
                for k in range(W):
                    s = 0.0
                    for j in range(d):
                        diff = a[p, k, j] - b[q, k, j]
                        s += diff * diff
                    if s > best:
                        best = s
                out[p, q] = best
        return out


# ---------------------------------------------------------------------------
# dispatch

if HAVE_NUMBA:
    project_box = project_box_nb
    project_halfspace = project_halfspace_nb
    project_ball = project_ball_nb
    prox_interval_quad = prox_interval_quad_nb
    window_dot = window_dot_nb
    window_sup = window_sup_nb
    path_sup_distance = path_sup_distance_nb
    pairwise_sq_supdist = pairwise_sq_supdist_nb
    BACKEND = "numba"
else:
    project_box = project_box_np
    project_halfspace = project_halfspace_np
    project_ball = project_ball_np
    prox_interval_quad = prox_interval_quad_np
    window_dot = window_dot_np
    window_sup = window_sup_np
    path_sup_distance = path_sup_distance_np
    pairwise_sq_supdist = pairwise_sq_supdist_np
    BACKEND = "numpy"


def active_backend():
    """Name of the kernel build in use ('numba' or 'numpy')."""
    return BACKEND
