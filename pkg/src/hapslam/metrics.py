"""Localization and mapping error metrics."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment


def mae(estimates, truth) -> float:
    """Mean Euclidean error between paired position sequences."""
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    tru = np.atleast_2d(np.asarray(truth, dtype=float))
    if est.shape != tru.shape:
        raise ValueError(f"length mismatch: {est.shape} vs {tru.shape}")
    return float(np.mean(np.linalg.norm(est - tru, axis=1)))


def ospa(est_set, true_set, cutoff: float = 10.0, p: float = 1.0) -> float:
    """Optimal subpattern assignment distance between two point sets.

    Exact bipartite matching on min(distance, cutoff)^p costs, cardinality
    penalty cutoff^p per unmatched point, normalized by the larger
    cardinality, then the p-th root.  Two empty sets have distance 0.
    """
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    if p < 1:
        raise ValueError("order p must be >= 1")
    x = np.asarray(est_set, dtype=float).reshape(-1, 2)
    y = np.asarray(true_set, dtype=float).reshape(-1, 2)
    n, m = len(x), len(y)
    if n == 0 and m == 0:
        return 0.0
    if n == 0 or m == 0:
        return float(cutoff)
    d = np.linalg.norm(x[:, None, :] - y[None, :, :], axis=2)
    cost = np.minimum(d, cutoff) ** p
    rows, cols = linear_sum_assignment(cost)
    matched = cost[rows, cols].sum()
    total = matched + cutoff**p * abs(n - m)
    return float((total / max(n, m)) ** (1.0 / p))
