#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the two hot kernels (truncated-likelihood evaluation, biweight IRLS)
and the full empirical-null fit under each backend, then a complete
simulation iteration. Run from the repo root:

    python benchmarks/bench_backends.py [--fit-reps 50]
"""

import argparse
import math
import time

import numpy as np

from profile_null import EnConfig, SimConfig, fit_empirical_null, gen_single_measure
from profile_null import _kernels


def _problem(seed=0, n=212):
    rng = np.random.default_rng(seed)
    sizes = np.exp(-6.0 + rng.normal(-0.4, math.sqrt(0.5), n)) \
        * rng.exponential(3e5, n)
    z = rng.normal(0.0, np.sqrt(1.0 + 0.14 * sizes))
    b = 1.645 * np.sqrt(1.0 + 0.08 * sizes)
    in_null = np.abs(z) <= b
    return z, sizes, in_null, b


def time_call(fn, *args, reps=2000, warmup=5):
    for _ in range(warmup):
        fn(*args)
    start = time.perf_counter()
    for _ in range(reps):
        fn(*args)
    return (time.perf_counter() - start) / reps


def bench_kernels(reps):
    z, sizes, in_null, b = _problem()
    rows = []

    variants = [("numpy", _kernels._null_loglik_np)]
    if _kernels.HAVE_NUMBA:
        variants.append(("numba", _kernels._null_loglik_nb))
    timings = {name: time_call(fn, 0.1, 0.9, z, sizes, in_null, b, reps=reps)
               for name, fn in variants}
    rows.append(("truncated loglik", timings))

    variants = [("numpy", _kernels._biweight_irls_np)]
    if _kernels.HAVE_NUMBA:
        variants.append(("numba", _kernels._biweight_irls_nb))
    timings = {name: time_call(fn, z, _kernels.TUKEY_C, 1e-8, 200,
                               reps=max(50, reps // 10))
               for name, fn in variants}
    rows.append(("biweight IRLS", timings))
    return rows


def bench_fit(reps):
    z, sizes, _, _ = _problem(seed=1)
    cfg = EnConfig()
    saved = (_kernels.null_loglik_core, _kernels.neg_null_loglik_u,
             _kernels.biweight_irls)
    timings = {}
    try:
        variants = [("numpy", (_kernels._null_loglik_np,
                               _kernels._neg_null_loglik_u_np,
                               _kernels._biweight_irls_np))]
        if _kernels.HAVE_NUMBA:
            variants.append(("numba", (_kernels._null_loglik_nb,
                                       _kernels._neg_null_loglik_u_nb,
                                       _kernels._biweight_irls_nb)))
        for name, (core, neg_u, irls) in variants:
            _kernels.null_loglik_core = core
            _kernels.neg_null_loglik_u = neg_u
            _kernels.biweight_irls = irls
            timings[name] = time_call(
                lambda: fit_empirical_null(z, sizes, cfg), reps=reps, warmup=2)
    finally:
        (_kernels.null_loglik_core, _kernels.neg_null_loglik_u,
         _kernels.biweight_irls) = saved
    return [("empirical-null fit", timings)]


def bench_generation(reps):
    config = SimConfig(seed=5)
    rng = np.random.default_rng(5)
    t = time_call(lambda: gen_single_measure(config, rng), reps=reps)
    return [("data generation (numpy)", {"numpy": t})]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--kernel-reps", type=int, default=2000)
    parser.add_argument("--fit-reps", type=int, default=30)
    args = parser.parse_args()

    print(f"selected backend: {_kernels.backend()}  "
          f"(numba available: {_kernels.HAVE_NUMBA})")
    print(f"{'benchmark':<26} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    rows = (bench_kernels(args.kernel_reps) + bench_fit(args.fit_reps)
            + bench_generation(args.kernel_reps))
    for name, timings in rows:
        np_t = timings.get("numpy")
        nb_t = timings.get("numba")
        np_s = f"{np_t * 1e6:10.1f}us" if np_t else "-"
        nb_s = f"{nb_t * 1e6:10.1f}us" if nb_t else "-"
        speed = f"{np_t / nb_t:8.1f}x" if np_t and nb_t else "-"
        print(f"{name:<26} {np_s:>12} {nb_s:>12} {speed:>9}")


if __name__ == "__main__":
    main()
