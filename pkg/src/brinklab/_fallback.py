"""Pure numpy/scipy implementations of the hot kernels.

These are the reference/fallback backends used when the compiled extension
is unavailable (or disabled via ``BRINKLAB_DISABLE_EXT=1``).  They produce
results identical to the compiled kernels; they are just slower at scale.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

__all__ = ["nn_distances", "assignment", "max_cover_multiplicity"]


def nn_distances(points: np.ndarray) -> np.ndarray:
    """Distance from each point to its nearest other point (inf for N=1)."""
    pts = np.ascontiguousarray(points, dtype=np.float64)
    n = pts.shape[0]
    if n == 1:
        return np.array([np.inf])
    if n <= 64:
        return _nn_brute(pts)
    d, _ = cKDTree(pts).query(pts, k=2)
    return np.ascontiguousarray(d[:, 1])


def _nn_brute(pts: np.ndarray) -> np.ndarray:
    diff = pts[:, None, :] - pts[None, :, :]
    # per-axis sum order matches the scalar dx*dx + dy*dy + dz*dz evaluation
    d2 = diff[:, :, 0] ** 2 + diff[:, :, 1] ** 2 + diff[:, :, 2] ** 2
    np.fill_diagonal(d2, np.inf)
    return np.sqrt(d2.min(axis=1))


def assignment(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact minimum-cost assignment for squared Euclidean costs.

    Returns the permutation ``perm`` minimizing ``sum_i |a[i] - b[perm[i]]|^2``.
    Dense Jonker-Volgenant; memory O(n^2).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    # |a-b|^2 assembled via the BLAS-friendly expansion; the -2ab term alone
    # decides the optimum because the squared-norm terms are row/col constant.
    cost = -2.0 * (a @ b.T)
    cost += (a * a).sum(axis=1)[:, None]
    cost += (b * b).sum(axis=1)[None, :]
    _, cols = linear_sum_assignment(cost)
    return cols.astype(np.int64)


def max_cover_multiplicity(centers: np.ndarray, side: float) -> int:
    """Exact maximum multiplicity of N closed axis-aligned cubes.

    The cubes have equal side length and are centered at ``centers``.  The
    maximum of the indicator sum is attained at a corner point whose
    coordinates are lower cube faces; we sweep x-candidates and reduce each
    slab to an exact boolean-matrix product over window indicators.
    """
    c = np.asarray(centers, dtype=np.float64)
    n = c.shape[0]
    if n == 0:
        return 0
    s = float(side)
    order = np.argsort(c[:, 0], kind="stable")
    xs, ys, zs = c[order, 0], c[order, 1], c[order, 2]
    best = 1
    for i in range(n):
        lo = np.searchsorted(xs, xs[i] - s, side="left")
        m = i + 1 - lo
        if m <= best:
            continue
        ysl = ys[lo : i + 1]
        zsl = zs[lo : i + 1]
        # covered_y[j, l] : point l lies in the y-window anchored at point j
        cy = (ysl[None, :] >= ysl[:, None] - s) & (ysl[None, :] <= ysl[:, None])
        cz = (zsl[None, :] >= zsl[:, None] - s) & (zsl[None, :] <= zsl[:, None])
        # depth at candidate (x_i-s/2, y_j-s/2, z_l-s/2) = sum_l' cy[j,l']*cz[l,l']
        depth = cy.astype(np.float32) @ cz.astype(np.float32).T
        best = max(best, int(round(float(depth.max()))))
    return best
