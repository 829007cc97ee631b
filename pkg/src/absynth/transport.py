"""Exact Wasserstein-1 distance between finite weighted point sets."""
from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.spatial.distance import cdist

from .errors import SupportTooLarge

MAX_SUPPORT = 256


def _normalise(points, weights):
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    w = np.asarray(weights, dtype=float)
    if len(w) != len(pts):
        raise ValueError("points and weights differ in length")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"weights must be nonnegative and sum to 1 (got {w.sum()!r})")
    keep = w > 0
    return pts[keep], w[keep]


def wasserstein_1d(x, p, y, q) -> float:
    """Area between the two CDFs."""
    grid = np.union1d(x, y)
    cp = np.cumsum(np.bincount(np.searchsorted(grid, x), weights=p, minlength=len(grid)))
    cq = np.cumsum(np.bincount(np.searchsorted(grid, y), weights=q, minlength=len(grid)))
    return float(np.sum(np.abs(cp - cq)[:-1] * np.diff(grid)))


def wasserstein_discrete(p_points, p_weights, q_points, q_weights) -> float:
    """W1 with Euclidean ground cost; exact LP on small supports in >1 dimension."""
    x, p = _normalise(p_points, p_weights)
    y, q = _normalise(q_points, q_weights)
    if x.shape[1] != y.shape[1]:
        raise ValueError("point sets live in different dimensions")
    if x.shape[1] == 1:
        return wasserstein_1d(x[:, 0], p, y[:, 0], q)
    if len(x) > MAX_SUPPORT or len(y) > MAX_SUPPORT:
        raise SupportTooLarge(f"supports {len(x)}x{len(y)} exceed {MAX_SUPPORT}")
    cost = cdist(x, y)
    n, m = cost.shape
    # marginal constraints on the row-major flattened coupling
    idx = np.arange(n * m)
    rows = np.concatenate([idx // m, n + idx % m])
    a_eq = sparse.csr_matrix((np.ones(2 * n * m), (rows, np.concatenate([idx, idx]))), shape=(n + m, n * m))
    b = np.concatenate([p / p.sum(), q / q.sum()])
    # the last marginal row is implied by the others
    res = linprog(cost.ravel(), A_eq=a_eq[:-1], b_eq=b[:-1], bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(max(res.fun, 0.0))
