"""Backend selection for the hot kernels.

The compiled ``_kernels`` extension is used when importable; setting the
environment variable ``GRASPKIT_PURE=1`` forces the numpy fallback.  Both
expose the same three functions with identical signatures.
"""
from __future__ import annotations

import os

import numpy as np

from . import _fallback

BACKEND = "python"
_impl = _fallback

if not os.environ.get("GRASPKIT_PURE"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback


def backends():
    """Map of available backend name -> kernel module (for tests and benchmarks)."""
    out = {"python": _fallback}
    try:
        from . import _kernels

        out["cython"] = _kernels
    except ImportError:
        pass
    return out


def ray_triangle_hits(origin, direction, v0, v1, v2, t_tol=1e-9, impl=None):
    impl = impl or _impl
    return impl.ray_triangle_hits(
        np.ascontiguousarray(origin, dtype=np.float64),
        np.ascontiguousarray(direction, dtype=np.float64),
        v0, v1, v2, float(t_tol),
    )


def simplex_iterate(tab, basis, n_enter, tol, max_iter, impl=None):
    impl = impl or _impl
    return impl.simplex_iterate(tab, basis, int(n_enter), float(tol), int(max_iter))


def gaussian_mixture(points, centers, weights, sigma, impl=None):
    impl = impl or _impl
    return impl.gaussian_mixture(
        np.ascontiguousarray(points, dtype=np.float64),
        np.ascontiguousarray(centers, dtype=np.float64),
        np.ascontiguousarray(weights, dtype=np.float64),
        1.0 / (2.0 * sigma * sigma),
    )
