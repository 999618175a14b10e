"""Independent brute-force reference implementations used across the tests."""
import numpy as np

from treeprune.dyadic_tree import REGULAR


def splits(level, dim, kind):
    if kind == REGULAR:
        return [level] * dim
    return [level // dim + (j < level % dim) for j in range(dim)]


def cell_box(x, level, dim, kind):
    """Lower corner and side lengths of the half-open cell containing x (1.0 clamped)."""
    side = np.array([2.0 ** -s for s in splits(level, dim, kind)])
    idx = np.array([min(int(np.floor(v / h)), int(round(1 / h)) - 1) for v, h in zip(x, side)])
    return idx * side, side


def envelope_members(X, x, level, kind):
    """Mask of rows of X inside the envelope of the cell containing x.

    The cell [a, b) is dilated by its smallest side r to [a - r, b + r); the
    upper face is closed where it reaches the cube boundary.
    """
    X = np.atleast_2d(X)
    dim = X.shape[1]
    lo, side = cell_box(x, level, dim, kind)
    r = side.min()
    a, b = lo - r, lo + side + r
    return np.all((X >= a) & ((X < b) | (b >= 1.0)), axis=1)


def eta_hat_scan(X, y, x, level, kind):
    m = envelope_members(X, x, level, kind)
    k = int(m.sum())
    return (int(y[m].sum()) / k if k else 0.0), k, int(y[m].sum())


def ici_reference(X, y, x, levels, c):
    """Plain transcription of the local depth-selection walk, deepest level first.

    ``levels`` is a list of (level, kind) from start to cap.
    """
    lo, hi = -np.inf, np.inf
    visited = []
    est = 0.0
    reason = "cap"
    for level, kind in levels:
        eta, k, _ = eta_hat_scan(X, y, x, level, kind)
        visited.append(level)
        if k:
            lo = max(lo, eta - 2 * c / np.sqrt(k))
            hi = min(hi, eta + 2 * c / np.sqrt(k))
        if hi <= lo:
            est, reason = (hi + lo) / 2, "disjoint"
            break
        est = eta
        if hi <= 0.5 or lo >= 0.5:
            reason = "oneSided"
            break
    return visited, reason, est, int(est >= 0.5)
