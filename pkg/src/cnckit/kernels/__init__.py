"""Kernel backend selection.

The compiled Cython extension is preferred when it was built; otherwise the
numpy fallback in :mod:`cnckit.kernels.pure` is used. Set ``CNCKIT_PURE=1``
in the environment to force the fallback, or use :func:`use_backend` to
switch temporarily (the benchmark and the test suite do this).

Integer-valued results (labels, crossing flags) are bit-identical across
backends; float results agree to rounding error.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

from cnckit.kernels import pure

try:
    from cnckit.kernels import _fast
except ImportError:
    _fast = None

_BACKENDS = {"python": pure}
if _fast is not None:
    _BACKENDS["cython"] = _fast

if os.environ.get("CNCKIT_PURE", "") not in ("", "0"):
    _active = pure
else:
    _active = _fast if _fast is not None else pure

ON_BOUNDARY = pure.ON_BOUNDARY
INSIDE = pure.INSIDE


def active_backend() -> str:
    return "cython" if _active is _fast else "python"


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


@contextmanager
def use_backend(name: str):
    """Temporarily select a kernel backend by name."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; have {available_backends()}")
    previous = _active
    _active = _BACKENDS[name]
    try:
        yield
    finally:
        _active = previous


def assign_labels(points, centroids):
    return _active.assign_labels(points, centroids)


def ring_crossings(lat, lon, ring):
    return _active.ring_crossings(lat, lon, ring)


def coo_matvec(rows, cols, weights, x):
    return _active.coo_matvec(rows, cols, weights, x)
