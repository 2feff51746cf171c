#!/usr/bin/env python3
"""Benchmark the hot kernels on both backends (numba JIT vs pure numpy).

Usage:
    python benchmarks/bench_kernels.py [--peers 2000000] [--repeat 5]

The same dispatch functions the package uses at runtime are timed under
each backend, so the numbers reflect what SWARMWATCH_KERNELS actually
switches.
"""

import argparse
import time

import numpy as np

from swarmwatch import _kernels


def best_of(fn, repeat: int) -> float:
    durations = []
    for _ in range(repeat):
        started = time.perf_counter()
        fn()
        durations.append(time.perf_counter() - started)
    return min(durations)


def build_cases(n_peers: int, n_ranges: int, n_queries: int, series_len: int):
    rng = np.random.default_rng(7)
    starts = np.sort(rng.choice(2**32 - 4000, size=n_ranges,
                                replace=False)).astype(np.uint32)
    ends = (starts + rng.integers(16, 3000, size=n_ranges)).astype(np.uint32)
    queries = rng.integers(0, 2**32, size=n_queries).astype(np.uint32)

    memb = rng.integers(1, 2**16, size=(n_peers, 1)).astype(np.uint64)
    mask = np.array([0b1011], dtype=np.uint64)
    selectors = np.array([[0b11], [0b100], [0b1000]], dtype=np.uint64)

    series = rng.random(series_len) * 1000
    series[rng.random(series_len) < 0.02] = np.nan

    return [
        ("range_lookup", lambda: _kernels.range_lookup(starts, ends, queries)),
        ("count_union", lambda: _kernels.count_union(memb, mask)),
        ("count_intersection", lambda: _kernels.count_intersection(memb, mask)),
        ("count_exact", lambda: _kernels.count_exact(memb, mask)),
        ("family_masks", lambda: _kernels.family_masks(memb, selectors)),
        ("moving_average", lambda: _kernels.moving_average(series, 61)),
    ]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--peers", type=int, default=2_000_000)
    parser.add_argument("--ranges", type=int, default=10_000)
    parser.add_argument("--queries", type=int, default=1_000_000)
    parser.add_argument("--series", type=int, default=1_000_000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    cases = build_cases(args.peers, args.ranges, args.queries, args.series)
    backends = ["numpy"]
    if _kernels.numba is not None:
        backends.append("numba")
    else:
        print("numba not importable; timing the numpy backend only")

    results = {}
    for backend in backends:
        _kernels.set_backend(backend)
        for name, fn in cases:
            fn()  # warm up (JIT compile on the numba side)
            results[(backend, name)] = best_of(fn, args.repeat)

    width = max(len(name) for name, _ in cases)
    header = f"{'kernel':<{width}}  " + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, _ in cases:
        row = f"{name:<{width}}  "
        for backend in backends:
            row += f"{results[(backend, name)] * 1000:>10.2f}ms"
        if len(backends) == 2:
            ratio = results[("numpy", name)] / results[("numba", name)]
            row += f"{ratio:>9.2f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
