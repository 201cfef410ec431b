"""Times the numba kernel builds against their pure-numpy fallbacks.

Kernel-level comparison runs both builds in-process; --end-to-end re-invokes
this script in subprocesses with MVSDE_NUMBA=0/1 and times a full coupled
deviation-pair batch through whichever build the flag selects.

    python benchmarks/bench_kernels.py [--end-to-end]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from mvsde import kernels


def timeit(fn, *args, repeat=20):
    fn(*args)  # warm-up (numba compilation)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels():
    rng = np.random.default_rng(0)
    L, n, d, W = 50_000, 120, 2, 40
    states = rng.normal(0, 2, (L, d))
    paths = rng.normal(0, 1, (L // 100, n, d))
    weights = rng.normal(0, 1, (W,))
    atoms_a = rng.normal(0, 1, (256, W, d))
    atoms_b = rng.normal(0, 1, (256, W, d))
    lo = np.array([0.0, -1.0])
    hi = np.array([np.inf, 1.0])
    center = np.zeros(d)
    cases = [
        ("project_box", (states, lo, hi),
         kernels.project_box_np, getattr(kernels, "project_box_nb", None)),
        ("project_ball", (states, center, 1.0),
         kernels.project_ball_np, getattr(kernels, "project_ball_nb", None)),
        ("window_dot", (paths, 10, weights),
         kernels.window_dot_np, getattr(kernels, "window_dot_nb", None)),
        ("window_sup", (paths, 0, n),
         kernels.window_sup_np, getattr(kernels, "window_sup_nb", None)),
        ("path_sup_distance", (paths, paths[:1]),
         kernels.path_sup_distance_np, getattr(kernels, "path_sup_distance_nb", None)),
        ("pairwise_sq_supdist", (atoms_a, atoms_b),
         kernels.pairwise_sq_supdist_np, getattr(kernels, "pairwise_sq_supdist_nb", None)),
    ]
    print(f"{'kernel':24s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s}")
    for name, args, f_np, f_nb in cases:
        t_np = timeit(f_np, *args)
        if f_nb is None:
            print(f"{name:24s} {t_np * 1e3:9.3f}ms {'n/a':>10s}")
            continue
        t_nb = timeit(f_nb, *args)
        print(f"{name:24s} {t_np * 1e3:9.3f}ms {t_nb * 1e3:9.3f}ms {t_np / t_nb:7.1f}x")


def end_to_end_once():
    from mvsde.config import build_sim_config
    from mvsde.presets import preset_problem
    from mvsde.solver import batch_clt_pair

    cfg = build_sim_config({"problem": preset_problem("example5_tanh_reflected"),
                            "execution": {"particles": 200, "seed": 0},
                            "_config_dir": "."})
    batch_clt_pair(cfg, 4, (0, 0), 1e-2)  # warm-up
    t0 = time.perf_counter()
    batch_clt_pair(cfg, 32, (0, 1), 1e-2)
    dt = time.perf_counter() - t0
    print(f"  coupled deviation pair, 32x200 particles, backend="
          f"{kernels.active_backend()}: {dt:.3f}s")


def bench_end_to_end():
    print("end-to-end (subprocess per backend):")
    here = os.path.abspath(__file__)
    for flag in ("1", "0"):
        env = dict(os.environ, MVSDE_NUMBA=flag)
        subprocess.run([sys.executable, here, "--single-e2e"], env=env, check=True)


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--end-to-end", action="store_true",
                        help="also time a full solver batch under both backends")
    parser.add_argument("--single-e2e", action="store_true", help=argparse.SUPPRESS)
    opts = parser.parse_args()
    if opts.single_e2e:
        end_to_end_once()
    else:
        print(f"kernel backend active by default: {kernels.active_backend()}")
        bench_kernels()
        if opts.end_to_end:
            bench_end_to_end()
