"""Backend selection for the hot loops.

The compiled extension is used when it was built; otherwise the numpy
fallback. Set ``LBF_KERNELS=python`` to force the fallback.
"""
from __future__ import annotations

import os

import numpy as np

from lbflats import _pykernels
from lbflats._pykernels import first_local_minimum

try:
    from lbflats import _ckernels
except ImportError:  # extension not built
    _ckernels = None

__all__ = [
    "available_backends",
    "backend",
    "beta2_scan",
    "first_local_minimum",
    "scan_neighborhoods",
    "set_backend",
    "swap_scores",
]

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["native"] = _ckernels

_impl = _pykernels


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def backend() -> str:
    return "native" if _impl is _ckernels and _ckernels is not None else "python"


def set_backend(name: str) -> str:
    """Switch kernels; ``"auto"`` picks the compiled core when present."""
    global _impl
    if name == "auto":
        name = "native" if "native" in _BACKENDS else "python"
    if name not in _BACKENDS:
        raise ValueError(f"kernel backend {name!r} unavailable; have {available_backends()}")
    previous = backend()
    _impl = _BACKENDS[name]
    return previous


def beta2_scan(pts, sqrad, center, d, affine, start, step, stop_size, allow_first_min=False):
    pts = np.ascontiguousarray(pts, dtype=float)
    sqrad = np.ascontiguousarray(sqrad, dtype=float)
    center = np.ascontiguousarray(center, dtype=float)
    return _impl.beta2_scan(
        pts, sqrad, center, int(d), bool(affine), int(start), int(step), int(stop_size), bool(allow_first_min)
    )


def scan_neighborhoods(pts, centers, d, affine, start, step, stop_size, allow_first_min=False):
    """Per-center ``(betas, selected_index, neighbor_order)``; see the backend docs."""
    pts = np.ascontiguousarray(pts, dtype=float)
    centers = np.ascontiguousarray(np.atleast_2d(centers), dtype=float)
    return _impl.scan_neighborhoods(
        pts, centers, int(d), bool(affine), int(start), int(step), int(stop_size), bool(allow_first_min)
    )


def swap_scores(dist, base):
    return _impl.swap_scores(np.ascontiguousarray(dist, dtype=float), np.ascontiguousarray(base, dtype=float))


set_backend(os.environ.get("LBF_KERNELS", "auto"))
