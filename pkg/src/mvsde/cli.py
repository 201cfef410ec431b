"""Batch front-end: validate a config, dispatch the task, emit artifacts.

Exit codes: 0 success (experiments: pass), 1 task failure, 2 config error.
Every output directory gets a manifest with the config hash, seed and
toolkit version; re-running a manifest's config reproduces byte-identical
numeric CSVs.
"""

import argparse
import json
import os
import sys

import numpy as np

import mvsde
from mvsde import kernels
from mvsde.config import build_sim_config, config_hash, load_config
from mvsde.errors import ConfigError, InversionUnavailable, MvsdeError
from mvsde.experiments import (
    clt_scaling_experiment,
    lln_experiment,
    mdp_experiment,
    sinusoid_perturbations,
    skeleton_continuity_check,
    write_report_files,
)
from mvsde.paths import Trajectory, trajectory_from_csv
from mvsde.rates import RateProblem, rate_by_inversion, rate_by_penalty, rate_certificate
from mvsde.solver import Control, export_bundle, simulate_perturbed, \
    solve_deterministic_limit


def _apply_threads(threads: int):
    if threads and kernels.HAVE_NUMBA:
        import numba

        try:
            numba.set_num_threads(threads)
        except ValueError:
            pass
    return threads


def _write_manifest(outdir, cfg, seed, extra=None):
    os.makedirs(outdir, exist_ok=True)
    manifest = {
        "config_hash": config_hash(cfg),
        "seed": int(seed),
        "version": mvsde.__version__,
        "kernel_backend": kernels.active_backend(),
    }
    manifest.update(extra or {})
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _outdir(cfg, args):
    out = args.out or cfg.get("output", {}).get("directory", "out")
    if not os.path.isabs(out):
        out = os.path.join(cfg["_config_dir"], out)
    os.makedirs(out, exist_ok=True)
    return out


def cmd_simulate(cfg, args) -> int:
    if "simulate" not in cfg:
        raise ConfigError("config has no `simulate` block")
    sim = build_sim_config(cfg, eps=cfg["simulate"]["epsilon"], seed=args.seed)
    bundle = simulate_perturbed(sim)
    out = _outdir(cfg, args)
    export_bundle(bundle, out, metadata={
        "epsilon": float(sim.eps),
        "seed": sim.seed,
        "grid": {"h": sim.grid.h, "r0": sim.grid.r0, "T": sim.grid.T},
        "config": {k: v for k, v in cfg.items() if not k.startswith("_")},
    })
    _write_manifest(out, cfg, sim.seed, {"task": "simulate"})
    return 0


def _rate_target(cfg, block, sim):
    spec = block["target"]
    if "csv" in spec:
        path = spec["csv"]
        if not os.path.isabs(path):
            path = os.path.join(cfg["_config_dir"], path)
        return trajectory_from_csv(path, sim.grid)
    if spec.get("x0"):
        x0, _, _ = solve_deterministic_limit(sim)
        return x0
    slope = float(spec["linear_slope"])
    vals = np.zeros((sim.grid.n_nodes, sim.d))
    W = sim.grid.n_history + 1
    vals[:W] = sim.initial_segment
    times = sim.grid.times()[W:]
    vals[W:] = sim.initial_segment[-1] + slope * times[:, None]
    return Trajectory(sim.grid, vals)


def cmd_rate(cfg, args) -> int:
    if "rate" not in cfg:
        raise ConfigError("config has no `rate` block")
    block = cfg["rate"]
    sim = build_sim_config(cfg, seed=args.seed)
    problem = RateProblem(
        target=_rate_target(cfg, block, sim),
        cfg=sim,
        kind=block.get("kind", "ldp"),
        budget=float(block.get("budget", 1e6)),
        penalty_schedule=tuple(block.get("penalty_schedule", (1e2, 1e3, 1e4, 1e5))),
        max_iterations=int(block.get("max_iterations", 400)),
    )
    method = block.get("method", "auto")
    residual_tol = float(block.get("residual_tolerance", 1e-4))
    result = {"method": None, "I_value": None, "residual": None,
              "iterations": 0, "converged": False}
    control = None
    if method in ("auto", "inversion"):
        try:
            rate, control = rate_by_inversion(problem)
            cert = rate_certificate(problem, control, residual_tol)
            result.update(method="inversion", I_value=rate,
                          residual=cert["residual"], converged=cert["certified"])
        except InversionUnavailable:
            if method == "inversion":
                raise
    if control is None:
        pen = rate_by_penalty(problem)
        result.update(method="penalty", I_value=pen.rate_upper,
                      residual=pen.residual, iterations=pen.iterations,
                      converged=pen.converged and pen.residual <= residual_tol)
        control = pen.control
    out = _outdir(cfg, args)
    cpath = os.path.join(out, "control.csv")
    with open(cpath, "w") as fh:
        fh.write("t," + ",".join(f"u{i + 1}" for i in range(control.m)) + "\n")
        for k in range(control.values.shape[0]):
            cells = ",".join("%.17g" % v for v in control.values[k])
            fh.write("%.17g,%s\n" % (k * control.h, cells))
    result["control_csv_path"] = cpath
    with open(os.path.join(out, "rate.json"), "w") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
    _write_manifest(out, cfg, sim.seed, {"task": "rate"})
    return 0 if result["converged"] else 1


def cmd_experiment(cfg, args) -> int:
    if "experiment" not in cfg:
        raise ConfigError("config has no `experiment` block")
    block = dict(cfg["experiment"])
    kind = args.kind or block["kind"]
    gamma = block.get("a_eps_gamma", 0.25)
    sim = build_sim_config(cfg, seed=args.seed,
                           a_eps_gamma=gamma if kind == "mdp" else None)
    out = _outdir(cfg, args)
    if kind == "skeleton":
        base = Control.constant(sim.grid, block.get("base_control", [1.0]))
        amplitudes = block.get("amplitudes", [1e-2, 1e-3, 1e-4, 1e-5])
        perturbations = sinusoid_perturbations(
            base, amplitudes, block.get("frequency", 5.0), sim.grid)
        report = skeleton_continuity_check(sim, base, perturbations,
                                           tolerance=block.get("threshold", 1e-6))
        with open(os.path.join(out, "report.json"), "w") as fh:
            json.dump({"kind": "skeleton", **report}, fh, indent=2, sort_keys=True)
        with open(os.path.join(out, "report.csv"), "w") as fh:
            fh.write("epsilon,batch,statistic,value\n")
            for amp, dist in zip(amplitudes, report["distances"]):
                fh.write("%.17g,0,sup_distance,%.17g\n" % (amp, dist))
        _write_manifest(out, cfg, sim.seed, {"task": "experiment", "kind": kind})
        return 0 if report["passed"] else 1

    grid_eps = block.get("epsilon_grid", [1e-1, 3e-2, 1e-2, 3e-3, 1e-3])
    if any(b >= a for a, b in zip(grid_eps, grid_eps[1:])) or min(grid_eps) <= 0:
        raise ConfigError("experiment.epsilon_grid must be positive and strictly decreasing")
    replicas = int(block.get("replicas", 256))
    batches = int(block.get("batches", 8))
    if kind == "lln":
        report = lln_experiment(sim, grid_eps, replicas, batches,
                                threshold=block.get("threshold", 1e-2))
    elif kind == "mdp":
        report = mdp_experiment(sim, grid_eps, replicas, batches,
                                threshold=block.get("threshold", 1e-2),
                                ratio_bound=block.get("ratio_bound", 5.0))
    elif kind == "clt":
        report = clt_scaling_experiment(
            sim, grid_eps, replicas, p=int(block.get("p", 1)), batches=batches,
            slope_tolerance=block.get("slope_tolerance", 0.25))
    else:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    write_report_files(report, out)
    _write_manifest(out, cfg, sim.seed, {"task": "experiment", "kind": kind})
    return 0 if report.passed else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mvsde",
        description="Particle solvers and deviation analysis for path-dependent "
                    "multivalued mean-field SDEs",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_txt in (
        ("simulate", "run the perturbed particle system and write CSVs"),
        ("rate", "evaluate the deviation rate of a target path"),
        ("experiment", "run a Monte Carlo scaling experiment"),
    ):
        p = sub.add_parser(name, help=help_txt)
        p.add_argument("--config", required=True, help="YAML run config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int,
                       default=int(os.environ.get("MVSDE_THREADS", "0")),
                       help="thread budget (0 = library default)")
        p.add_argument("--out", default=None, help="output directory")
        if name == "experiment":
            p.add_argument("--kind", choices=["lln", "mdp", "clt", "skeleton"],
                           default=None, help="override the experiment kind")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _apply_threads(args.threads)
    try:
        cfg = load_config(args.config)
        if args.command == "simulate":
            return cmd_simulate(cfg, args)
        if args.command == "rate":
            return cmd_rate(cfg, args)
        return cmd_experiment(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MvsdeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
