"""Independent reference computations used by several test modules."""

import numpy as np


def line_search_grid(corr, norm_sq, bound, cells=100_000):
    """Brute-force minimizer of beta^2 * norm_sq - 2 beta corr over [-bound, bound].

    Returns (argmin, grid spacing).
    """
    grid = np.linspace(-bound, bound, cells + 1)
    q = grid * grid * norm_sq - 2.0 * grid * corr
    return grid[int(np.argmin(q))], 2.0 * bound / cells


def l1_threshold_by_bisection(v, L):
    """Projection onto the l1 ball by root-finding the soft threshold (no sorting)."""
    from scipy.optimize import brentq

    u = np.abs(v)
    if u.sum() <= L:
        return np.array(v, dtype=float)
    theta = brentq(lambda t: np.maximum(u - t, 0).sum() - L, 0.0, u.max(), xtol=1e-15)
    return np.sign(v) * np.maximum(u - theta, 0.0)
