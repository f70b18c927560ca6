# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels (see kernels.pure)."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ON_BOUNDARY = 2
INSIDE = 1


def assign_labels(double[:, ::1] points, double[:, ::1] centroids):
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t k = centroids.shape[0]
    cdef Py_ssize_t i, j, best
    cdef double dx, dy, d, best_d
    labels_arr = np.empty(n, dtype=np.int64)
    dists_arr = np.empty(n, dtype=np.float64)
    cdef long long[::1] labels = labels_arr
    cdef double[::1] dists = dists_arr
    for i in range(n):
        best = 0
        best_d = -1.0
        for j in range(k):
            dx = points[i, 0] - centroids[j, 0]
            dy = points[i, 1] - centroids[j, 1]
            d = dx * dx + dy * dy
            if best_d < 0.0 or d < best_d:
                best_d = d
                best = j
        labels[i] = best
        dists[i] = best_d
    return labels_arr, dists_arr


def ring_crossings(double[::1] lat, double[::1] lon, double[:, ::1] ring):
    cdef Py_ssize_t n = lat.shape[0]
    cdef Py_ssize_t m = ring.shape[0] - 1
    cdef Py_ssize_t i, p
    cdef double y, x, yi, xi, yj, xj, cross, x_at, lo, hi
    cdef unsigned char flags
    out_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] out = out_arr
    for p in range(n):
        y = lat[p]
        x = lon[p]
        flags = 0
        for i in range(m):
            yi = ring[i, 0]
            xi = ring[i, 1]
            yj = ring[i + 1, 0]
            xj = ring[i + 1, 1]
            cross = (xj - xi) * (y - yi) - (yj - yi) * (x - xi)
            if cross == 0.0:
                lo = xi if xi < xj else xj
                hi = xj if xi < xj else xi
                if lo <= x <= hi:
                    lo = yi if yi < yj else yj
                    hi = yj if yi < yj else yi
                    if lo <= y <= hi:
                        flags |= ON_BOUNDARY
            if (yi > y) != (yj > y):
                x_at = (xj - xi) * (y - yi) / (yj - yi) + xi
                if x < x_at:
                    flags ^= INSIDE
        out[p] = flags
    return out_arr


def coo_matvec(long long[::1] rows, long long[::1] cols,
               double[::1] weights, double[::1] x):
    cdef Py_ssize_t nnz = rows.shape[0]
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t e
    y_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] y = y_arr
    for e in range(nnz):
        y[rows[e]] += weights[e] * x[cols[e]]
    return y_arr
