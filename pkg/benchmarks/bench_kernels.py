"""Time the hot kernels on their njit path against the numpy fallback.

The kernel binding is fixed at import (SEGFLOW_DISABLE_NUMBA), so the
comparison spawns one subprocess per mode and merges the results.  Sizes
match the acceptance resolution: 513 x 128 fields, 65 tridiagonal modes.

Run:  python3 benchmarks/bench_kernels.py
"""

import json
import os
import subprocess
import sys
import time

import numpy as np

NX, NY = 512, 128
REPEAT = 7          # best-of timing; first call pays any JIT cost separately


def bench(fn, *args, number=20):
    fn(*args)                      # warmup / compile
    best = float("inf")
    for _ in range(REPEAT):
        t0 = time.perf_counter()
        for _ in range(number):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / number)
    return best


def run_cases() -> dict:
    from segflow import kernels

    rng = np.random.default_rng(7)
    p = rng.standard_normal((NX + 1, NY))
    c = rng.random((NX + 1, NY)) + 0.5
    out = np.empty_like(p)
    hx2i = hy2i = 1.0e2
    j_lo, j_hi = 0, NX - 1

    nm = NY // 2 + 1
    diag = 1.0 + rng.random(nm)
    sup0 = np.full(nm, -0.3)
    prof = rng.random(NX)
    e = -0.15
    cp, pv = kernels.thomas_factor(diag, e, sup0, NX)
    rhs = rng.standard_normal((nm, NX))
    sol = np.empty_like(rhs)
    w = rng.random(NX + 1)

    times = {
        "lap5": bench(kernels.lap5, p, hx2i, hy2i, j_lo, j_hi, True, out),
        "apply_helmholtz": bench(kernels.apply_helmholtz, p, c, 0.05, hx2i,
                                 hy2i, j_lo, j_hi, True, out),
        "thomas_factor": bench(kernels.thomas_factor, diag, e, sup0, NX),
        "thomas_factor_profile": bench(kernels.thomas_factor_profile,
                                       diag, prof, e, sup0),
        "thomas_solve": bench(kernels.thomas_solve, cp, pv, e, rhs, sol),
        "grad_y_sq_cols": bench(kernels.grad_y_sq_cols, p, 0.05, 1),
        "grad_x_sq_cells": bench(kernels.grad_x_sq_cells, p, 0.02, 0.05),
        "weighted_dot": bench(kernels.weighted_dot, p, p, w),
    }
    return {"numba": kernels.using_numba(), "times": times}


def run_mode(disable_numba: bool) -> dict:
    env = dict(os.environ, SEGFLOW_DISABLE_NUMBA="1" if disable_numba else "0")
    res = subprocess.run(
        [sys.executable, os.path.abspath(__file__), "--inner"],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(res.stdout)


def main() -> int:
    if "--inner" in sys.argv:
        print(json.dumps(run_cases()))
        return 0
    fast = run_mode(disable_numba=False)
    slow = run_mode(disable_numba=True)
    if not fast["numba"]:
        print("numba unavailable; both columns are the numpy fallback")
    name_w = max(len(k) for k in fast["times"])
    print(f"{'kernel':<{name_w}}  {'njit':>10}  {'numpy':>10}  {'speedup':>8}")
    for name, t_fast in fast["times"].items():
        t_slow = slow["times"][name]
        print(f"{name:<{name_w}}  {t_fast * 1e6:>8.1f}us  {t_slow * 1e6:>8.1f}us"
              f"  {t_slow / t_fast:>7.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
