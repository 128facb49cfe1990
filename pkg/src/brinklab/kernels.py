"""Backend dispatch: compiled Cython kernels with numpy/scipy fallback.

The compiled extension is preferred when importable; setting the
environment variable ``BRINKLAB_DISABLE_EXT=1`` before import forces the
fallback.  Both backends satisfy the same exactness contracts, so results
do not depend on the backend, only speed does (see benchmarks/).
"""

from __future__ import annotations

import os

import numpy as np

from . import _fallback

if os.environ.get("BRINKLAB_DISABLE_EXT"):
    _ext = None
else:
    try:
        from . import _kernels as _ext
    except ImportError:
        _ext = None

BACKEND = "compiled" if _ext is not None else "fallback"

__all__ = ["BACKEND", "nn_distances", "assignment", "max_cover_multiplicity", "nn_cell_size"]


def nn_cell_size(points: np.ndarray) -> float:
    """Grid cell for the spatial hash: max(expected NN distance, diam/256)."""
    pts = np.asarray(points)
    ext = pts.max(axis=0) - pts.min(axis=0)
    diam = float(np.linalg.norm(ext))
    vol = float(np.prod(ext))
    n = len(pts)
    expected = 0.55 * (vol / n) ** (1.0 / 3.0) if vol > 0 else 0.0
    cell = max(expected, diam / 256.0)
    return cell if cell > 0 else 1.0


def nn_distances(points: np.ndarray) -> np.ndarray:
    """Exact nearest-neighbor distances (inf for a single point)."""
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if _ext is not None and len(pts) > 64:
        return _ext.nn_distances(pts, nn_cell_size(pts))
    return _fallback.nn_distances(pts)


def assignment(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact min-cost assignment permutation for squared Euclidean costs."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("point sets must have equal shape")
    if _ext is not None:
        return _ext.auction_assignment(a, b)
    return _fallback.assignment(a, b)


def max_cover_multiplicity(centers: np.ndarray, side: float) -> int:
    """Exact max multiplicity of equal closed cubes centered at ``centers``."""
    c = np.ascontiguousarray(centers, dtype=np.float64)
    if _ext is not None:
        return int(_ext.max_cover_multiplicity(c, float(side)))
    return int(_fallback.max_cover_multiplicity(c, float(side)))
