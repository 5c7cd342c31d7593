"""One-dimensional Wasserstein-1 distance between samples."""

import numpy as np
from scipy import stats

from services.errors import ArgumentError


def w1_empirical(samples_a, samples_b) -> float:
    """Exact W1 between two empirical laws, as the L1 distance of their quantile functions."""
    a = np.asarray(samples_a, dtype=float).reshape(-1)
    b = np.asarray(samples_b, dtype=float).reshape(-1)
    if a.size == 0 or b.size == 0:
        raise ArgumentError("w1_empirical needs two non-empty samples")
    if a.size == b.size:
        return float(np.mean(np.abs(np.sort(a) - np.sort(b))))
    return float(stats.wasserstein_distance(a, b))
