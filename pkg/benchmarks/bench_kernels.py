#!/usr/bin/env python3
"""Benchmark the boosting kernels: numba JIT backend vs the pure-numpy path.

Run:  python3 benchmarks/bench_kernels.py
The active backend follows the REGENCI_NUMBA environment variable; both
implementations are imported directly here so one process times both.
"""

import time

import numpy as np

from regenci import _kernels
from regenci.numkit import RngStream


def make_problem(n, p, seed=0):
    stream = RngStream(seed, 123)
    X = stream.standard_normal((n, p))
    eta = X[:, 0] - 0.5 * X[:, 1] ** 2 + 0.4 * X[:, 2] * X[:, 3 % p]
    z = (stream.uniform01(n) < 1 / (1 + np.exp(-eta))).astype(float)
    order = np.empty((p, n), np.int64)
    for j in range(p):
        order[j] = np.argsort(X[:, j], kind="stable")
    return X, z, order


def time_call(fn, *args, repeats=5):
    best = np.inf
    result = None
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, result


def main():
    if not _kernels.NUMBA_ENABLED:
        print("numba backend unavailable (REGENCI_NUMBA=0 or import failure); "
              "timing the numpy path only")
    print(f"active backend: {_kernels.BACKEND}")
    header = (f"{'n':>6} {'rounds':>7} {'depth':>6} | {'numpy fit':>10} "
              f"{'jit fit':>10} {'speedup':>8} | {'numpy pred':>10} "
              f"{'jit pred':>10} {'speedup':>8} | {'max |dp|':>9}")
    print(header)
    print("-" * len(header))
    cases = [(500, 100, 3), (1000, 100, 3), (1000, 200, 3), (2000, 200, 5)]
    for n, rounds, depth in cases:
        X, z, order = make_problem(n, 5)
        fit_args = (X, z, order, rounds, depth, 0.1, 1.0, 0.0, 1.0, 0.0)
        if _kernels.NUMBA_ENABLED:
            _kernels.boost_fit(*fit_args)  # compile before timing
        t_np, trees_np = time_call(_kernels._boost_fit_numpy, *fit_args)
        if _kernels.NUMBA_ENABLED:
            t_jit, trees_jit = time_call(_kernels.boost_fit, *fit_args)
        else:
            t_jit, trees_jit = float("nan"), trees_np

        Xn = RngStream(1, 123).standard_normal((n, 5))
        pred_args_np = (Xn, *trees_np, 0.1, 0.0)
        pred_args_jit = (Xn, *trees_jit, 0.1, 0.0)
        if _kernels.NUMBA_ENABLED:
            _kernels.boost_predict(*pred_args_jit)
        tp_np, margins_np = time_call(_kernels._boost_predict_numpy, *pred_args_np)
        if _kernels.NUMBA_ENABLED:
            tp_jit, margins_jit = time_call(_kernels.boost_predict, *pred_args_jit)
        else:
            tp_jit, margins_jit = float("nan"), margins_np

        prob_np = 1 / (1 + np.exp(-margins_np))
        prob_jit = 1 / (1 + np.exp(-margins_jit))
        gap = float(np.max(np.abs(prob_np - prob_jit)))
        print(f"{n:>6} {rounds:>7} {depth:>6} | {t_np:>10.4f} {t_jit:>10.4f} "
              f"{t_np / t_jit:>8.1f} | {tp_np:>10.4f} {tp_jit:>10.4f} "
              f"{tp_np / tp_jit:>8.1f} | {gap:>9.2e}")


if __name__ == "__main__":
    main()
