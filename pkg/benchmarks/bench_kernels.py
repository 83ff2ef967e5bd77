#!/usr/bin/env python3
"""Compare the compiled distance/accumulation kernels with the numpy fallback.

The kernels dominate scan runtime: every Lloyd iteration at every lattice
node is one assign() plus one accumulate(), and the LOF detector reuses
pairwise_sqdist for its distance matrix. Run after building the extension:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from trendscan import kernels
from trendscan.cluster import KMeansParams, kmeans

CASES = [  # (points, dims, centroids) ~ series-count x years x k
    (200, 6, 8),
    (1000, 8, 8),
    (5000, 8, 8),
    (10000, 10, 16),
]


def best_of(fn, repeats=5):
    timings = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        timings.append(time.perf_counter() - start)
    return min(timings)


def backends():
    if kernels._ext is None:
        print("compiled extension not available; benchmarking fallback only")
        return {"numpy": (kernels._np_assign, kernels._np_accumulate)}
    return {
        "numpy": (kernels._np_assign, kernels._np_accumulate),
        "compiled": (kernels.assign, kernels.accumulate),
    }


def bench_kernels():
    print(f"{'case':>18} {'backend':>9} {'assign':>10} {'accumulate':>11}")
    for n, d, k in CASES:
        rng = np.random.default_rng(0)
        x = np.ascontiguousarray(rng.normal(size=(n, d)))
        c = np.ascontiguousarray(rng.normal(size=(k, d)))
        rows = {}
        for name, (assign, accumulate) in backends().items():
            labels, _ = assign(x, c)
            t_assign = best_of(lambda: assign(x, c))
            t_acc = best_of(lambda: accumulate(x, labels, k))
            rows[name] = (t_assign, t_acc)
            print(f"{f'{n}x{d} k={k}':>18} {name:>9} "
                  f"{t_assign * 1e3:9.3f}ms {t_acc * 1e3:10.3f}ms")
        if len(rows) == 2:
            speed = rows["numpy"][0] / rows["compiled"][0]
            print(f"{'':>18} {'speedup':>9} {speed:9.2f}x")


def bench_full_kmeans():
    """End-to-end clustering cost with whichever backend is active."""
    rng = np.random.default_rng(1)
    x = np.vstack([rng.normal(i * 10, 1.0, (1250, 8)) for i in range(8)])
    params = KMeansParams(k=8, seed=0)
    elapsed = best_of(lambda: kmeans(x, params), repeats=3)
    print(f"\nkmeans on {x.shape[0]}x{x.shape[1]} (k=8, backend="
          f"{kernels.BACKEND}): {elapsed * 1e3:.1f}ms")


if __name__ == "__main__":
    print(f"active backend: {kernels.BACKEND}")
    bench_kernels()
    bench_full_kmeans()
