#!/usr/bin/env python3
"""Benchmark the compiled hot kernels against the pure-numpy fallback.

orifuse._kernels compiles its functions with numba unless ORIFUSE_NO_NUMBA=1
is set at import time.  To compare both paths in one process this script
imports the module twice: once as installed, and once re-imported under the
fallback flag, then times the workloads that dominate real runs (chart maps,
batch maps, and the sequential memory-average sweep).

Usage: python benchmarks/bench_kernels.py [--repeat N] [--sweep-len N]
"""

import argparse
import importlib
import os
import sys
import time

import numpy as np

FLAG = "ORIFUSE_NO_NUMBA"


def load_kernels(fallback):
    """Import orifuse._kernels fresh with or without the fallback flag."""
    saved_env = os.environ.get(FLAG)
    saved_mod = sys.modules.pop("orifuse._kernels", None)
    os.environ[FLAG] = "1" if fallback else "0"
    try:
        module = importlib.import_module("orifuse._kernels")
        sys.modules.pop("orifuse._kernels", None)
    finally:
        if saved_mod is not None:
            sys.modules["orifuse._kernels"] = saved_mod
        if saved_env is None:
            os.environ.pop(FLAG, None)
        else:
            os.environ[FLAG] = saved_env
    return module


def best_time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def workloads(kernels, vecs, sweep):
    identity = np.eye(3)
    one_vec = np.ascontiguousarray(vecs[0])

    def scalar_exp_log():
        for _ in range(20_000):
            kernels.rot_log(kernels.rot_exp(one_vec))

    def batch_maps():
        kernels.rot_log_many(kernels.rot_exp_many(vecs))

    def geodesic_steps():
        kernels.consecutive_geodesic_steps(sweep)

    def memory_sweep():
        hist = np.zeros((5, 3))
        n_turns, n_hist = 0, 0
        for i in range(sweep.shape[0]):
            _, n_turns, n_hist = kernels.memory_average_step(
                identity, sweep[i], 0.5, 0.5, n_turns, hist, n_hist, 0.15, 0.6428,
            )

    return [
        ("scalar exp+log x2e4", scalar_exp_log),
        (f"batch exp+log {vecs.shape[0]:.0e}", batch_maps),
        (f"geodesic steps {sweep.shape[0]:.0e}", geodesic_steps),
        (f"memory sweep {sweep.shape[0]:.0e}", memory_sweep),
    ]


def main():
    parser = argparse.ArgumentParser(description="compare numba kernels vs numpy fallback")
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--batch", type=int, default=100_000)
    parser.add_argument("--sweep-len", type=int, default=10_000)
    args = parser.parse_args()

    compiled = load_kernels(fallback=False)
    fallback = load_kernels(fallback=True)
    if not compiled.USING_NUMBA:
        print("note: numba unavailable or disabled; both columns run the numpy fallback")

    rng = np.random.default_rng(0)
    vecs = rng.normal(size=(args.batch, 3))
    vecs *= (rng.uniform(0, np.pi - 1e-6, args.batch) / np.linalg.norm(vecs, axis=1))[:, None]
    vecs = np.ascontiguousarray(vecs)
    sweep_psis = np.ascontiguousarray(
        np.outer(np.linspace(0.9 * np.pi, 1.1 * np.pi, args.sweep_len), [1.0, 0.0, 0.0])
    )
    sweep = compiled.rot_exp_many(sweep_psis)

    header = f"{'workload':<24}{'compiled [s]':>14}{'fallback [s]':>14}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    rows = zip(workloads(compiled, vecs, sweep), workloads(fallback, vecs, sweep))
    for (name, fast), (_, slow) in rows:
        fast()  # warm-up triggers compilation on the numba path
        t_fast = best_time(fast, args.repeat)
        t_slow = best_time(slow, 1)
        print(f"{name:<24}{t_fast:>14.4f}{t_slow:>14.4f}{t_slow / t_fast:>9.1f}x")


if __name__ == "__main__":
    sys.exit(main())
