"""Time the jit-compiled hot kernels against their pure-numpy fallbacks.

Usage:
    python3 benchmarks/bench_kernels.py [--repeats N]

Run with VTDECODE_NO_NUMBA=1 to confirm the fallback path alone; in that mode
only the numpy column is reported.
"""

import argparse
import time

import numpy as np

from vtdecode import kernels


def time_call(fn, args, repeats: int) -> float:
    fn(*args)  # warmup covers jit compilation and cache effects
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def workloads(rng):
    values = rng.normal(size=(1024, 2048))
    taps = rng.normal(size=16)
    pooled = rng.normal(size=(1024, 2048))
    queries = rng.normal(size=(240, 512))
    refs = rng.normal(size=(240, 512))
    sym = rng.normal(size=(64, 64))
    sym = (sym + sym.T) / 2.0
    return [
        ("temporal_correlate", "1024x2048, 16 taps", (values, taps)),
        ("group_max", "1024x2048, delta 16", (pooled, 16)),
        ("pairwise_sq_dists", "240x512 vs 240x512", (queries, refs)),
        ("jacobi_eigvals", "64x64 symmetric", (sym,)),
    ]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=7,
                        help="timed repetitions per kernel (best is reported)")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    rows = []
    for name, shape, call_args in workloads(rng):
        numpy_fn = getattr(kernels, f"{name}_numpy")
        numba_fn = getattr(kernels, f"{name}_numba")
        t_numpy = time_call(numpy_fn, call_args, args.repeats)
        t_numba = time_call(numba_fn, call_args, args.repeats) if numba_fn else None
        rows.append((name, shape, t_numpy, t_numba))

    print(f"selected backend: {kernels.BACKEND}\n")
    header = f"{'kernel':<20} {'workload':<24} {'numpy':>10} {'numba':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, shape, t_numpy, t_numba in rows:
        if t_numba is None:
            print(f"{name:<20} {shape:<24} {t_numpy * 1e3:>8.2f}ms {'-':>10} {'-':>8}")
        else:
            print(f"{name:<20} {shape:<24} {t_numpy * 1e3:>8.2f}ms "
                  f"{t_numba * 1e3:>8.2f}ms {t_numpy / t_numba:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
