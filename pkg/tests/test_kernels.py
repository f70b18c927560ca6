from __future__ import annotations

import numpy as np
import pytest

from cnckit import kernels
from cnckit.kernels import pure


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def contiguous(a):
    return np.ascontiguousarray(a)


def test_backend_selection_reports_name():
    assert kernels.active_backend() in ("cython", "python")
    assert "python" in kernels.available_backends()


def test_use_backend_rejects_unknown():
    with pytest.raises(ValueError):
        with kernels.use_backend("fortran"):
            pass


needs_cython = pytest.mark.skipif(
    "cython" not in kernels.available_backends(),
    reason="compiled kernels not built",
)


@needs_cython
def test_assign_labels_backends_bitwise_equal(rng):
    for _ in range(20):
        n, k = int(rng.integers(1, 400)), int(rng.integers(1, 9))
        points = contiguous(rng.normal(size=(n, 2)))
        centroids = contiguous(rng.normal(size=(k, 2)))
        with kernels.use_backend("python"):
            labels_py, dists_py = kernels.assign_labels(points, centroids)
        with kernels.use_backend("cython"):
            labels_cy, dists_cy = kernels.assign_labels(points, centroids)
        assert np.array_equal(labels_py, labels_cy)
        assert np.array_equal(dists_py, dists_cy)  # same op order, bitwise


@needs_cython
def test_ring_crossings_backends_bitwise_equal(rng):
    for _ in range(20):
        m = int(rng.integers(3, 30))
        angles = np.sort(rng.uniform(0, 2 * np.pi, m))
        radii = rng.uniform(0.2, 1.5, m)
        ring = np.empty((m + 1, 2))
        ring[:-1, 0] = radii * np.sin(angles)
        ring[:-1, 1] = radii * np.cos(angles)
        ring[-1] = ring[0]
        ring = contiguous(ring)
        lat = contiguous(rng.uniform(-2, 2, 300))
        lon = contiguous(rng.uniform(-2, 2, 300))
        with kernels.use_backend("python"):
            a = kernels.ring_crossings(lat, lon, ring)
        with kernels.use_backend("cython"):
            b = kernels.ring_crossings(lat, lon, ring)
        assert np.array_equal(a, b)


@needs_cython
def test_coo_matvec_backends_agree(rng):
    for _ in range(20):
        n = int(rng.integers(2, 200))
        nnz = int(rng.integers(1, 5 * n))
        rows = contiguous(rng.integers(0, n, nnz))
        cols = contiguous(rng.integers(0, n, nnz))
        weights = contiguous(rng.uniform(0.1, 4.0, nnz))
        x = contiguous(rng.uniform(size=n))
        with kernels.use_backend("python"):
            a = kernels.coo_matvec(rows, cols, weights, x)
        with kernels.use_backend("cython"):
            b = kernels.coo_matvec(rows, cols, weights, x)
        assert np.allclose(a, b, rtol=0, atol=1e-12)


def test_pure_ring_crossings_boundary_flag():
    square = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0], [0.0, 0.0]])
    flags = pure.ring_crossings(
        np.array([0.5, 0.0, 2.0]), np.array([0.5, 0.5, 2.0]), square
    )
    assert flags[0] & pure.INSIDE
    assert flags[1] & pure.ON_BOUNDARY
    assert flags[2] == 0


def test_matvec_empty_graph():
    x = np.ones(4)
    empty = np.array([], dtype=np.int64)
    out = pure.coo_matvec(empty, empty, np.array([]), x)
    assert np.array_equal(out, np.zeros(4))


def test_bench_runs_quickly(capsys):
    from cnckit import bench

    assert bench.run(sizes=[200]) == 0
    output = capsys.readouterr().out
    assert "assign_labels" in output
    assert "coo_matvec" in output
