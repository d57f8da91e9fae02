"""
Saturated (doubly-stochastic) target rate matrices for the switch.
"""

from typing import Optional

import numpy as np

from src.markov.sampling import SeedLike, make_rng

PRESETS = ("uniform", "random")


def saturated_rate_matrix(
    n: int,
    seed: SeedLike = None,
    preset: str = "uniform",
    n_permutations: Optional[int] = None,
) -> np.ndarray:
    """
    Doubly-stochastic matrix with strictly positive entries.

    "uniform" gives v_ij = 1/N. "random" mixes a Dirichlet-weighted convex
    combination of at least N random permutation matrices with the uniform
    matrix at weight 1/N, so v_min >= 1/N^2.

    Args:
        n: Switch size, at least 2
        seed: Seed for the random preset
        preset: "uniform" or "random"
        n_permutations: Number of permutation matrices (default N)

    Returns:
        np.ndarray: v with unit row and column sums
    """
    if n < 2:
        raise ValueError("A switch needs N >= 2")
    if preset not in PRESETS:
        raise ValueError(f"Unknown preset {preset!r}; expected one of {PRESETS}")

    uniform = np.full((n, n), 1.0 / n)
    if preset == "uniform":
        return uniform

    rng = make_rng(seed)
    count = max(n, n_permutations or n)
    weights = rng.dirichlet(np.ones(count))
    mixture = np.zeros((n, n))
    for weight in weights:
        mixture[np.arange(n), rng.permutation(n)] += weight
    floor = 1.0 / n
    return (1.0 - floor) * mixture + floor * uniform


def min_rate(v: np.ndarray) -> float:
    """v_min = min_ij v_ij."""
    return float(np.min(v))
