"""
Heavy-traffic predictions for the input-queued switch.
"""

import numpy as np


def _variances(sigma_sq) -> np.ndarray:
    sigma_sq = np.asarray(sigma_sq, dtype=np.float64)
    if np.any(sigma_sq < 0):
        raise ValueError("Variances must be non-negative")
    return sigma_sq


def switch_prediction(sigma_sq, n: int) -> float:
    """Limit of eps E[sum_ij Q_ij] under MaxWeight: (1 - 1/(2N)) sum_ij sigma_ij^2."""
    if n < 1:
        raise ValueError("N must be positive")
    return (1.0 - 1.0 / (2.0 * n)) * float(np.sum(_variances(sigma_sq)))


def universal_lower(sigma_sq) -> float:
    """Lower bound ||sigma||^2 / 2 on the limit for any scheduling policy."""
    return float(np.sum(_variances(sigma_sq))) / 2.0


def optimality_ratio(n: int) -> float:
    """Prediction over the universal lower bound, 2 - 1/N."""
    if n < 1:
        raise ValueError("N must be positive")
    return 2.0 - 1.0 / n
