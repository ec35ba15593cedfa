"""Compare the compiled and pure-python kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--reps 20000]
"""

import argparse
import timeit

import numpy as np

from rangepose._core import kernels_py

try:
    from rangepose._core import _kernels as compiled
except ImportError:
    compiled = None

rng = np.random.default_rng(5)

CASES = [
    ("jr (se2)", "jr", (rng.normal(size=3),)),
    ("jr (se3)", "jr", (rng.normal(size=6),)),
    ("jr_inv (se3)", "jr_inv", (rng.normal(size=6),)),
    ("djr_w (se3)", "djr_w", (rng.normal(size=6), rng.normal(size=6))),
    ("djrinv_w (se3)", "djrinv_w", (rng.normal(size=6), rng.normal(size=6))),
    ("se_exp (se3)", "se_exp", (rng.normal(size=6),)),
    ("se_log (se3)", "se_log", kernels_py.se_exp(rng.normal(size=6))),
    ("adjoint (se3)", "adjoint", kernels_py.se_exp(rng.normal(size=6))),
]


def bench(backend, name, args, reps):
    fn = getattr(backend, name)
    t = timeit.timeit(lambda: fn(*args), number=reps)
    return t / reps * 1e6  # microseconds per call


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int, default=20000)
    opts = ap.parse_args()

    print(f"{'kernel':<16} {'python us':>10} {'cython us':>10} {'speedup':>8}")
    for label, name, args in CASES:
        py = bench(kernels_py, name, args, opts.reps)
        if compiled is None:
            print(f"{label:<16} {py:>10.2f} {'n/a':>10} {'n/a':>8}")
            continue
        cy = bench(compiled, name, args, opts.reps)
        print(f"{label:<16} {py:>10.2f} {cy:>10.2f} {py / cy:>7.1f}x")
    if compiled is None:
        print("compiled extension not importable; showing python only")


if __name__ == "__main__":
    main()
