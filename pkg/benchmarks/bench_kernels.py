"""Benchmark the compiled loss kernels against the pure-numpy fallback.

Usage:
    python benchmarks/bench_kernels.py

Times the hot kernels (loss value, gradient scatter-add, prediction gather)
on several observation counts with both backends, then times one end-to-end
transfer fit per backend in subprocesses selected via TRANSMC_NUMBA.
"""

import os
import subprocess
import sys
import time

import numpy as np

from transmc import kernels

SIZES = [(60, 30, 2_000), (91, 180, 25_000), (300, 150, 100_000)]
REPEATS = 200


def _time(fn, *args, repeats=REPEATS):
    fn(*args)  # warm-up (and JIT compile for the numba path)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def bench_kernels():
    print(f"active backend: {kernels.BACKEND}")
    header = f"{'case':>22} {'kernel':>10} {'numpy ms':>10} {'active ms':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    rng = np.random.default_rng(0)
    for m1, m2, n in SIZES:
        A = rng.standard_normal((m1, m2))
        rows = rng.integers(0, m1, size=n)
        cols = rng.integers(0, m2, size=n)
        values = rng.standard_normal(n)
        out = np.empty_like(A)
        case = f"{m1}x{m2}, n={n}"
        pairs = [
            ("value", lambda: kernels.loss_value_numpy(A, rows, cols, values),
             lambda: kernels.loss_value(A, rows, cols, values)),
            ("gradient", lambda: kernels.loss_gradient_numpy(A, rows, cols, values, out),
             lambda: kernels.loss_gradient(A, rows, cols, values, out)),
            ("predict", lambda: kernels.predict_numpy(A, rows, cols),
             lambda: kernels.predict(A, rows, cols)),
        ]
        for name, ref, active in pairs:
            t_ref = _time(ref)
            t_act = _time(active)
            print(f"{case:>22} {name:>10} {1e3 * t_ref:10.4f} {1e3 * t_act:10.4f} "
                  f"{t_ref / t_act:8.2f}x")


_E2E_SNIPPET = """
import time
from transmc import kernels
from transmc.cli import DEFAULT_MULTIPLIER
from transmc.estimators import PenaltyPolicy, trans_mc
from transmc.simulation import PRESETS, generate_scenario
from transmc.solver import SolverConfig

data = generate_scenario(PRESETS["paper-5.1-small"], rep=0)
policy = PenaltyPolicy(a=30.0, c1=DEFAULT_MULTIPLIER, c2=DEFAULT_MULTIPLIER, v=1.0)
trans_mc(data.target, data.sources[:2], policy, SolverConfig())  # warm-up
t0 = time.perf_counter()
trans_mc(data.target, data.sources, policy, SolverConfig())
print(f"{kernels.BACKEND}: {time.perf_counter() - t0:.3f}s")
"""


def bench_end_to_end():
    print("\nend-to-end transfer fit (paper-5.1-small, 10 sources):")
    for flag in ("1", "0"):
        env = dict(os.environ, TRANSMC_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", _E2E_SNIPPET], env=env,
                             capture_output=True, text=True)
        print("  " + (out.stdout.strip() or out.stderr.strip()))


if __name__ == "__main__":
    bench_kernels()
    bench_end_to_end()
