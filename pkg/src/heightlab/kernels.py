"""Backend selection for the hot kernels.

The compiled ``_core`` extension is used when it imports; otherwise the numpy
fallback in ``_core_py`` is used. Set ``HEIGHTLAB_PURE=1`` to force the
fallback. ``HEIGHTLAB_THREADS`` caps the worker count of the parallel kernels;
every parallel kernel writes disjoint outputs, so results do not depend on it.
"""

from __future__ import annotations

import os

import numpy as np

from . import _core_py

if os.environ.get("HEIGHTLAB_PURE", "") not in ("", "0"):
    _impl = _core_py
    BACKEND = "python"
else:
    try:
        from . import _core as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _core_py
        BACKEND = "python"


def num_threads() -> int:
    raw = os.environ.get("HEIGHTLAB_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)


def bilinear_gather(field, u, v):
    """Sample an ``(H, W, C)`` raster at continuous ``(u=col, v=row)``.

    Returns ``(values (N, C), valid (N,))``. Points outside
    ``[0, W-1] x [0, H-1]`` or touching a non-finite neighbour with nonzero
    weight come back invalid with value 0.
    """
    field = np.ascontiguousarray(field, dtype=np.float64)
    u = np.ascontiguousarray(np.ravel(u), dtype=np.float64)
    v = np.ascontiguousarray(np.ravel(v), dtype=np.float64)
    return _impl.bilinear_gather(field, u, v, num_threads())


def bilinear_splat(u, v, mass, shape):
    """Scatter ``mass`` bilinearly into a zero raster of ``shape=(H, W)``.

    Corners falling outside the raster are dropped, which keeps the result
    continuous in ``(u, v)``. Accumulation is serial for reproducibility.
    """
    H, W = shape
    u = np.ascontiguousarray(np.ravel(u), dtype=np.float64)
    v = np.ascontiguousarray(np.ravel(v), dtype=np.float64)
    mass = np.ascontiguousarray(np.ravel(mass), dtype=np.float64)
    return _impl.bilinear_splat(u, v, mass, int(H), int(W))


def bilinear_splat_adjoint(u, v, mass, grad):
    """Vector-Jacobian product of :func:`bilinear_splat`.

    Given ``grad = dL/draster`` returns ``(dL/dmass, dL/du, dL/dv)``.
    """
    u = np.ascontiguousarray(np.ravel(u), dtype=np.float64)
    v = np.ascontiguousarray(np.ravel(v), dtype=np.float64)
    mass = np.ascontiguousarray(np.ravel(mass), dtype=np.float64)
    grad = np.ascontiguousarray(grad, dtype=np.float64)
    return _impl.bilinear_splat_adjoint(u, v, mass, grad, num_threads())
