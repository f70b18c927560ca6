"""Benchmark the compiled kernels against the numpy fallback.

Run with ``cnckit bench`` or ``python -m cnckit.bench``. Reports wall time
per kernel per backend plus end-to-end k-means timings.
"""

from __future__ import annotations

import sys
import time

import numpy as np

from cnckit import kernels


def _time(fn, repeats: int = 5) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def _workloads(n: int):
    rng = np.random.default_rng(12345)
    points = np.ascontiguousarray(rng.normal(size=(n, 2)))
    centroids = np.ascontiguousarray(rng.normal(size=(8, 2)))
    ring_pts = 64
    angles = np.sort(rng.uniform(0, 2 * np.pi, ring_pts))
    radii = rng.uniform(0.5, 1.0, ring_pts)
    ring = np.empty((ring_pts + 1, 2))
    ring[:-1, 0] = radii * np.sin(angles)
    ring[:-1, 1] = radii * np.cos(angles)
    ring[-1] = ring[0]
    ring = np.ascontiguousarray(ring)
    lat = np.ascontiguousarray(rng.uniform(-1, 1, n))
    lon = np.ascontiguousarray(rng.uniform(-1, 1, n))
    nnz = 8 * n
    rows = np.ascontiguousarray(rng.integers(0, n, nnz))
    cols = np.ascontiguousarray(rng.integers(0, n, nnz))
    weights = np.ascontiguousarray(rng.uniform(0.5, 3.0, nnz))
    x = np.ascontiguousarray(rng.uniform(size=n))
    return {
        "assign_labels": lambda: kernels.assign_labels(points, centroids),
        "ring_crossings": lambda: kernels.ring_crossings(lat, lon, ring),
        "coo_matvec": lambda: kernels.coo_matvec(rows, cols, weights, x),
    }


def run(sizes: list[int] | None = None) -> int:
    sizes = sizes or [1_000, 10_000, 100_000]
    backends = kernels.available_backends()
    print(f"backends available: {', '.join(backends)}")
    if len(backends) == 1:
        print("compiled extension not built; benchmarking the fallback only")
    header = f"{'kernel':<16}{'n':>9}" + "".join(f"{b:>14}" for b in backends)
    print(header)
    print("-" * len(header))
    for n in sizes:
        workloads = _workloads(n)
        for name, fn in workloads.items():
            cells = []
            for backend in backends:
                with kernels.use_backend(backend):
                    cells.append(f"{_time(fn) * 1e3:.2f} ms")
            print(f"{name:<16}{n:>9}" + "".join(f"{c:>14}" for c in cells))
    return 0


if __name__ == "__main__":
    sys.exit(run(sizes=[int(s) for s in sys.argv[1:]] or None))
