#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the pure-Python fallback.

Covers the hot paths: PRNG fills (uniform/gaussian) and the row-wise
entropy/JS/cosine kernels that run per target sample per adaptation step.
Both backends produce bit-identical results; this script reports the speed
difference and verifies the equality on the benchmarked inputs.

Usage: python benchmarks/bench_kernels.py [--rows N] [--cols C] [--repeat R]
"""

import argparse
import time

import numpy as np

from jfpd import _kernels
from jfpd.rng import Rng


def timeit(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=20000)
    parser.add_argument("--cols", type=int, default=32)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    backends = _kernels.get_backends()
    if "compiled" not in backends:
        print("compiled backend not available; nothing to compare")
        return

    rng = Rng(42)
    rows, cols = args.rows, args.cols
    p = np.abs(rng.gaussians(rows * cols).reshape(rows, cols)) + 1e-3
    p /= p.sum(axis=1, keepdims=True)
    q = np.roll(p, 1, axis=0).copy()
    f = rng.gaussians(rows * cols).reshape(rows, cols)
    z = rng.gaussians(rows * cols).reshape(rows, cols)
    state = np.array(Rng(7).state, dtype=np.uint64)

    cases = [
        ("uniform fill", lambda mod: mod.xoshiro_fill_uniform(state.copy(), rows)),
        ("gaussian fill", lambda mod: mod.xoshiro_fill_gaussian(state.copy(), rows)),
        ("row entropy", lambda mod: mod.row_entropy(p)),
        ("row JS", lambda mod: mod.row_js(p, q)),
        ("row cosine", lambda mod: mod.row_cosine(f, z)),
    ]

    print(f"rows={rows} cols={cols} (best of {args.repeat})")
    print(f"{'kernel':<14}{'compiled':>12}{'python':>12}{'speedup':>10}  identical")
    for name, call in cases:
        t_c, out_c = timeit(lambda: call(backends["compiled"]), args.repeat)
        t_p, out_p = timeit(lambda: call(backends["python"]), args.repeat)
        same = np.array_equal(np.asarray(out_c), np.asarray(out_p))
        print(
            f"{name:<14}{t_c * 1e3:>10.2f}ms{t_p * 1e3:>10.2f}ms"
            f"{t_p / t_c:>9.1f}x  {same}"
        )


if __name__ == "__main__":
    main()
