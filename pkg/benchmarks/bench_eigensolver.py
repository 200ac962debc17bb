#!/usr/bin/env python3
"""Benchmark the Jacobi eigensolver backends (compiled vs NumPy fallback).

Usage: python benchmarks/bench_eigensolver.py [--sizes 100,200,400]

Both backends diagonalize the same Neumann operator matrices; agreement is
checked against the closed-form spectrum while timing.
"""

import argparse
import time

import numpy as np

from tracelab import fields
from tracelab._kernels import BACKEND, jacobi_eigh, jacobi_eigh_python
from tracelab.grids import build_grid
from tracelab.operators import assemble_operator


def laplacian_matrix(n):
    g = build_grid(1, [np.pi], [n])
    op = assemble_operator(g, fields.constant(g, 1.0), fields.constant(g, 0.0))
    h = g.spacing[0]
    exact = (2.0 / h**2) * (1.0 - np.cos(np.arange(n) * np.pi / (n - 1)))
    return op.symmetrized_dense(), exact


def run(backend_name, fn, matrix, exact):
    start = time.perf_counter()
    diag, _, sweeps, off = fn(matrix)
    elapsed = time.perf_counter() - start
    err = np.abs(np.sort(diag) - exact).max() / max(1.0, exact.max())
    return elapsed, sweeps, err


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="100,200,400",
                        help="comma list of matrix sizes")
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    backends = [("numpy-fallback", jacobi_eigh_python)]
    if BACKEND == "compiled":
        backends.insert(0, ("compiled", jacobi_eigh))
    else:
        print("note: compiled kernel not built; benchmarking the fallback only")

    print(f"{'n':>6} {'backend':>16} {'time [s]':>10} {'sweeps':>7} "
          f"{'rel err':>10} {'speedup':>8}")
    for n in sizes:
        matrix, exact = laplacian_matrix(n)
        base_time = None
        for name, fn in reversed(backends):  # fallback first to set the baseline
            elapsed, sweeps, err = run(name, fn, matrix, exact)
            if name == "numpy-fallback":
                base_time = elapsed
            speedup = f"{base_time / elapsed:7.1f}x" if base_time else "    n/a"
            print(f"{n:>6} {name:>16} {elapsed:>10.3f} {sweeps:>7} "
                  f"{err:>10.2e} {speedup:>8}")


if __name__ == "__main__":
    main()
