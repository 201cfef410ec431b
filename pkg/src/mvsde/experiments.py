"""Monte Carlo studies of the small-noise limits at desk scale.

Each experiment sweeps a decreasing epsilon grid, splits replicas into
independent batches for standard errors, and reduces per-particle sup
statistics of the relevant coupled difference.  Pass rules are one-sided:
the theory provides upper bounds with non-constructive constants, so decay
is asserted at the expected order minus a tolerance, never as an equality.
"""

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from mvsde import kernels
from mvsde.errors import MvsdeError, PreconditionError
from mvsde.solver import (
    SimConfig,
    Control,
    batch_clt_pair,
    batch_mdp_deviation,
    batch_perturbed,
    batch_skeleton,
    solve_deterministic_limit,
)


class FitUnavailable(MvsdeError):
    """Too few positive points to fit a log-log slope."""


@dataclass
class ExperimentReport:
    kind: str
    epsilon_grid: list
    statistic: str
    means: list
    standard_errors: list
    batch_means: list  # per epsilon: list over batches
    passed: bool
    details: dict = field(default_factory=dict)
    slope: float = None
    slope_ci: tuple = None
    exact_match: bool = False
    runtime_seconds: float = 0.0
    seed: int = 0

    def to_dict(self):
        return {
            "kind": self.kind,
            "epsilon_grid": list(map(float, self.epsilon_grid)),
            "statistic": self.statistic,
            "means": list(map(float, self.means)),
            "standard_errors": list(map(float, self.standard_errors)),
            "batch_means": [[float(v) for v in row] for row in self.batch_means],
            "passed": bool(self.passed),
            "details": self.details,
            "slope": None if self.slope is None else float(self.slope),
            "slope_ci": None if self.slope_ci is None else
                        [float(self.slope_ci[0]), float(self.slope_ci[1])],
            "exact_match": bool(self.exact_match),
            "runtime_seconds": float(self.runtime_seconds),
            "seed": int(self.seed),
        }


def _validate_grid(eps_grid):
    eps_grid = [float(e) for e in eps_grid]
    if any(e <= 0 for e in eps_grid):
        raise PreconditionError("epsilon grid must be positive")
    if any(b >= a for a, b in zip(eps_grid, eps_grid[1:])):
        raise PreconditionError("epsilon grid must be strictly decreasing")
    return eps_grid


def _split_batches(replicas, batches):
    if batches < 8:
        raise PreconditionError("standard errors need at least 8 batches")
    if replicas % batches != 0 or replicas < batches:
        raise PreconditionError("replicas must split evenly into the batches")
    return replicas // batches


def _stats(batch_means):
    bm = np.asarray(batch_means, dtype=float)
    return float(bm.mean()), float(bm.std(ddof=1) / np.sqrt(len(bm)))


def _decreasing_up_to(means, ses, z):
    for i in range(len(means) - 1):
        slack = z * np.hypot(ses[i], ses[i + 1])
        if means[i + 1] > means[i] + slack:
            return False
    return True


def fit_loglog_slope(points, batch_values=None):
    """OLS slope of log(value) against log(eps); CI from batch resampling.

    Nonpositive values are excluded with a warning; fewer than 4 surviving
    points make the fit unavailable.
    """
    pts = [(float(e), float(v)) for e, v in points]
    kept = [(e, v) for e, v in pts if v > 0]
    if len(kept) < len(pts):
        warnings.warn("nonpositive values excluded from the log-log fit")
    if len(kept) < 4:
        raise FitUnavailable(f"need >= 4 positive points, have {len(kept)}")
    loge = np.log([e for e, _ in kept])
    logv = np.log([v for _, v in kept])
    slope, _ = np.polyfit(loge, logv, 1)
    ci = None
    if batch_values is not None:
        per_batch = []
        n_batches = len(batch_values[0])
        for b in range(n_batches):
            bpts = [(pts[i][0], batch_values[i][b]) for i in range(len(pts))
                    if batch_values[i][b] > 0]
            if len(bpts) >= 4:
                s, _ = np.polyfit(np.log([e for e, _ in bpts]),
                                  np.log([v for _, v in bpts]), 1)
                per_batch.append(s)
        if len(per_batch) >= 2:
            spread = 2.0 * np.std(per_batch, ddof=1) / np.sqrt(len(per_batch))
            ci = (float(slope - spread), float(slope + spread))
    return float(slope), ci


def _sup_sq_vs_x0(V, x0_values):
    d = kernels.path_sup_distance(V, np.ascontiguousarray(x0_values[None, :, :]))
    return d * d


def lln_experiment(cfg: SimConfig, eps_grid, replicas: int, batches: int = 8,
                   threshold: float = 1e-2, stream_base: int = 10) -> ExperimentReport:
    """Estimates E sup |X^eps - X0|^2 along the grid; passes when the sequence
    decreases (up to 2 SE) and the final level is below the threshold."""
    t0 = time.perf_counter()
    eps_grid = _validate_grid(eps_grid)
    per_batch = _split_batches(replicas, batches)
    x0, _, _ = solve_deterministic_limit(cfg)
    means, ses, rows = [], [], []
    for i, eps in enumerate(eps_grid):
        bm = []
        for b in range(batches):
            V = batch_perturbed(cfg, per_batch, (stream_base, i, b), eps=eps)
            bm.append(float(np.mean(_sup_sq_vs_x0(V, x0.values))))
        m, se = _stats(bm)
        means.append(m)
        ses.append(se)
        rows.append(bm)
    decreasing = _decreasing_up_to(means, ses, 2.0)
    passed = decreasing and means[-1] < threshold
    return ExperimentReport(
        kind="lln", epsilon_grid=eps_grid, statistic="mean_sup_sq_deviation",
        means=means, standard_errors=ses, batch_means=rows, passed=passed,
        details={"decreasing": decreasing, "threshold": threshold,
                 "final": means[-1], "replicas": replicas, "batches": batches},
        runtime_seconds=time.perf_counter() - t0, seed=cfg.seed)


def clt_scaling_experiment(cfg: SimConfig, eps_grid, replicas: int, p: int = 1,
                           batches: int = 8, slope_tolerance: float = 0.25,
                           stream_base: int = 20) -> ExperimentReport:
    """Estimates E sup |Z^eps - Z|^{2p} and checks decay of order at least
    eps^(p - tolerance); bit-identical coupled paths short-circuit to the
    exact-match verdict instead of fitting noise."""
    t0 = time.perf_counter()
    if p < 1:
        raise PreconditionError("moment order p must be >= 1")
    eps_grid = _validate_grid(eps_grid)
    per_batch = _split_batches(replicas, batches)
    x0, _, _ = solve_deterministic_limit(cfg)
    x0V = np.ascontiguousarray(x0.values[None, :, :])
    means, ses, rows = [], [], []
    for i, eps in enumerate(eps_grid):
        bm = []
        for b in range(batches):
            Vz_eps, Vz = batch_clt_pair(cfg, per_batch, (stream_base, i, b),
                                        eps, x0V=x0V)
            D = kernels.path_sup_distance(Vz_eps, Vz)
            bm.append(float(np.mean(D ** (2 * p))))
        m, se = _stats(bm)
        means.append(m)
        ses.append(se)
        rows.append(bm)
    if max(means) == 0.0:
        return ExperimentReport(
            kind="clt", epsilon_grid=eps_grid, statistic=f"mean_sup_coupled_diff_{2*p}",
            means=means, standard_errors=ses, batch_means=rows, passed=True,
            exact_match=True,
            details={"p": p, "note": "coupled paths identical; slope undefined",
                     "replicas": replicas, "batches": batches},
            runtime_seconds=time.perf_counter() - t0, seed=cfg.seed)
    slope, ci = fit_loglog_slope(list(zip(eps_grid, means)), rows)
    passed = slope >= p - slope_tolerance
    return ExperimentReport(
        kind="clt", epsilon_grid=eps_grid, statistic=f"mean_sup_coupled_diff_{2*p}",
        means=means, standard_errors=ses, batch_means=rows, passed=passed,
        slope=slope, slope_ci=ci,
        details={"p": p, "required_slope": p - slope_tolerance,
                 "replicas": replicas, "batches": batches},
        runtime_seconds=time.perf_counter() - t0, seed=cfg.seed)


def mdp_experiment(cfg: SimConfig, eps_grid, replicas: int, batches: int = 8,
                   threshold: float = 1e-2, ratio_bound: float = 5.0,
                   stream_base: int = 30) -> ExperimentReport:
    """Second moments of the normalized deviation must decay below the
    threshold; fourth moments, rescaled by their theoretical (eps/a^2)^2
    level, must stay bounded (max/min ratio capped, no monotone increase)."""
    t0 = time.perf_counter()
    if cfg.a_eps_gamma is None:
        raise PreconditionError("mdp experiment needs the a(eps) rule")
    eps_grid = _validate_grid(eps_grid)
    per_batch = _split_batches(replicas, batches)
    x0, _, _ = solve_deterministic_limit(cfg)
    x0V = np.ascontiguousarray(x0.values[None, :, :])
    m2_means, m2_ses, m2_rows = [], [], []
    m4_norm_means, m4_rows = [], []
    for i, eps in enumerate(eps_grid):
        scale4 = (eps / eps ** (2 * cfg.a_eps_gamma)) ** 2
        bm2, bm4 = [], []
        for b in range(batches):
            Vm = batch_mdp_deviation(cfg, per_batch, (stream_base, i, b), eps,
                                     x0V=x0V)
            sup = kernels.window_sup(Vm, 0, Vm.shape[1])
            bm2.append(float(np.mean(sup ** 2)))
            bm4.append(float(np.mean(sup ** 4)) / scale4)
        m, se = _stats(bm2)
        m2_means.append(m)
        m2_ses.append(se)
        m2_rows.append(bm2)
        m4_norm_means.append(float(np.mean(bm4)))
        m4_rows.append(bm4)
    decreasing = _decreasing_up_to(m2_means, m2_ses, 2.0)
    below = m2_means[-1] < threshold
    lo, hi = min(m4_norm_means), max(m4_norm_means)
    if hi == 0.0:  # deviation identically zero (no noise source)
        ratio = 1.0
    else:
        ratio = hi / lo if lo > 0 else np.inf
    monotone_up = all(b > a for a, b in zip(m4_norm_means, m4_norm_means[1:]))
    bounded = ratio <= ratio_bound and not monotone_up
    passed = decreasing and below and bounded
    return ExperimentReport(
        kind="mdp", epsilon_grid=eps_grid, statistic="mean_sup_sq_normalized_deviation",
        means=m2_means, standard_errors=m2_ses, batch_means=m2_rows, passed=passed,
        details={
            "decreasing": decreasing, "threshold": threshold, "final": m2_means[-1],
            "fourth_moment_normalized": m4_norm_means,
            "fourth_moment_batches": m4_rows,
            "fourth_moment_ratio": float(ratio), "ratio_bound": ratio_bound,
            "fourth_moment_monotone_increase": monotone_up,
            "a_eps_gamma": cfg.a_eps_gamma,
            "replicas": replicas, "batches": batches,
        },
        runtime_seconds=time.perf_counter() - t0, seed=cfg.seed)


def sinusoid_perturbations(base: Control, amplitudes, frequency: float,
                           grid) -> list:
    """Controls base + amp*sin(2*pi*frequency*t) on the first noise channel."""
    t = (np.arange(grid.n_steps) * grid.h)
    out = []
    for amp in amplitudes:
        vals = np.array(base.values, dtype=float)
        vals[:, 0] = vals[:, 0] + amp * np.sin(2 * np.pi * frequency * t)
        out.append(Control(vals, grid.h, budget=np.inf))
    return out


def skeleton_continuity_check(cfg: SimConfig, base: Control, perturbations,
                              tolerance: float = 1e-6) -> dict:
    """Sup distance of perturbed skeletons from the base skeleton.

    Perturbations come ordered from the strongest to the weakest; the check
    passes when the distances decrease and the final one is below tolerance.
    """
    t0 = time.perf_counter()
    x0, _, _ = solve_deterministic_limit(cfg)
    stack = np.stack([base.values] + [u.values for u in perturbations])
    V = batch_skeleton(cfg, stack, x0=x0, kind="ldp")
    base_path = np.ascontiguousarray(V[0][None, :, :])
    dists = kernels.path_sup_distance(np.ascontiguousarray(V[1:]), base_path)
    dists = [float(x) for x in dists]
    decreasing = all(b <= a for a, b in zip(dists, dists[1:]))
    passed = decreasing and dists[-1] < tolerance
    return {
        "distances": dists,
        "decreasing": decreasing,
        "final": dists[-1],
        "tolerance": tolerance,
        "passed": passed,
        "runtime_seconds": time.perf_counter() - t0,
    }


def write_report_files(report: ExperimentReport, outdir, stem="report"):
    """Emit the JSON document and the flat CSV (epsilon,batch,statistic,value)."""
    import json
    import os

    os.makedirs(outdir, exist_ok=True)
    jpath = os.path.join(outdir, f"{stem}.json")
    with open(jpath, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
    cpath = os.path.join(outdir, f"{stem}.csv")
    with open(cpath, "w") as fh:
        fh.write("epsilon,batch,statistic,value\n")
        for i, eps in enumerate(report.epsilon_grid):
            for b, v in enumerate(report.batch_means[i]):
                fh.write("%.17g,%d,%s,%.17g\n" % (eps, b, report.statistic, v))
    return jpath, cpath
