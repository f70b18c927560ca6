"""Numpy implementations of the hot kernels.

These are the fallback used when the compiled extension is unavailable.
Both backends implement the same three functions with identical semantics:

* ``assign_labels`` — nearest-centroid assignment (k-means inner loop)
* ``ring_crossings`` — batched even-odd ray casting against one ring
* ``coo_matvec``   — sparse matrix-vector product (power-iteration step)
"""

from __future__ import annotations

import numpy as np

ON_BOUNDARY = 2  # bit flag returned by ring_crossings
INSIDE = 1


def assign_labels(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Assign every point to its nearest centroid (squared Euclidean).

    Ties resolve to the lowest centroid index. Returns (labels, distances):
    int64 labels plus each point's squared distance to its centroid.
    """
    diff = points[:, None, :] - centroids[None, :, :]
    dists = np.einsum("nkd,nkd->nk", diff, diff)
    labels = np.argmin(dists, axis=1).astype(np.int64)
    return labels, dists[np.arange(len(points)), labels]


def ring_crossings(lat: np.ndarray, lon: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """Even-odd ray cast of many points against one closed ring.

    ``ring`` is an (m, 2) array of (lat, lon) vertices with first == last.
    The ray is cast in the +longitude direction. Returns a uint8 array with
    bit 0 set when the crossing count is odd and bit 1 set when the point
    lies exactly on an edge or vertex of the ring.
    """
    y = np.asarray(lat, dtype=np.float64)
    x = np.asarray(lon, dtype=np.float64)
    inside = np.zeros(y.shape, dtype=bool)
    boundary = np.zeros(y.shape, dtype=bool)
    for i in range(len(ring) - 1):
        yi, xi = ring[i, 0], ring[i, 1]
        yj, xj = ring[i + 1, 0], ring[i + 1, 1]
        # exact on-segment test: collinear and within the edge bounding box
        cross = (xj - xi) * (y - yi) - (yj - yi) * (x - xi)
        on_seg = (
            (cross == 0.0)
            & (x >= min(xi, xj))
            & (x <= max(xi, xj))
            & (y >= min(yi, yj))
            & (y <= max(yi, yj))
        )
        boundary |= on_seg
        crosses = (yi > y) != (yj > y)
        if np.any(crosses):
            x_at = (xj - xi) * (y - yi) / (yj - yi) + xi
            inside ^= crosses & (x < x_at)
    return (inside.astype(np.uint8) * INSIDE) | (boundary.astype(np.uint8) * ON_BOUNDARY)


def coo_matvec(
    rows: np.ndarray, cols: np.ndarray, weights: np.ndarray, x: np.ndarray
) -> np.ndarray:
    """y[r] += w * x[c] over all stored entries; returns y of len(x)."""
    if len(rows) == 0:
        return np.zeros_like(x)
    return np.bincount(rows, weights=weights * x[cols], minlength=len(x))
