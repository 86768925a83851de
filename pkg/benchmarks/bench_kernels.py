#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Runs both implementations of every kernel on policy-network-sized and
oracle-sized workloads and prints a timing table. The package picks the
numba path by default; set PORTALLOC_DISABLE_NUMBA=1 to force numpy at
import time (this script times both regardless of the flag).
"""
import time

import numpy as np

from portalloc._kernels import IMPLEMENTATIONS, USING_NUMBA

RNG = np.random.default_rng(0)


def timeit(fn, *args, repeat=200):
    fn(*args)  # warm-up (JIT compilation for the numba path)
    best = float("inf")
    for _ in range(5):
        start = time.perf_counter()
        for _ in range(repeat):
            fn(*args)
        best = min(best, (time.perf_counter() - start) / repeat)
    return best


def conv1d_case():
    x = RNG.normal(size=(8, 7))          # 2 channels x 4 assets, 7 lags
    k = RNG.normal(size=(10, 8, 3))
    b = RNG.normal(size=10)
    gy = RNG.normal(size=(10, 5))
    return (x, k, b), (x, k, gy)


def conv2d_case():
    x = RNG.normal(size=(2, 8, 16))
    k = RNG.normal(size=(10, 2, 3, 3))
    b = RNG.normal(size=10)
    gy = RNG.normal(size=(10, 6, 14))
    return (x, k, b), (x, k, gy)


def main():
    fwd1, bwd1 = conv1d_case()
    fwd2, bwd2 = conv2d_case()
    cases = [
        ("conv1d_fwd", fwd1, 2000),
        ("conv1d_bwd", bwd1, 2000),
        ("conv2d_fwd", fwd2, 500),
        ("conv2d_bwd", bwd2, 500),
        ("simplex_compositions", (200, 4), 3),
    ]
    names = list(IMPLEMENTATIONS)
    print(f"active path: {'numba' if USING_NUMBA else 'numpy'}")
    header = f"{'kernel':<22}" + "".join(f"{n + ' (ms)':>14}" for n in names)
    if len(names) > 1:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for kernel, args, repeat in cases:
        times = [timeit(IMPLEMENTATIONS[n][kernel], *args, repeat=repeat) for n in names]
        row = f"{kernel:<22}" + "".join(f"{t * 1e3:>14.4f}" for t in times)
        if len(times) > 1:
            row += f"{times[0] / times[1]:>9.1f}x"
        print(row)
    if len(names) > 1:
        a, b = names
        check = np.allclose(
            IMPLEMENTATIONS[a]["conv1d_fwd"](*fwd1),
            IMPLEMENTATIONS[b]["conv1d_fwd"](*fwd1), atol=1e-12)
        print(f"paths agree on conv1d_fwd: {check}")
    else:
        print("numba unavailable or disabled: only the numpy path was timed")


if __name__ == "__main__":
    main()
