"""
Autocovariance of the emitted arrival process and its asymptotic variance.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from loguru import logger

from src.markov.chain import FiniteMarkovChain, stationary_distribution
from src.markov.mixing import MixingEnvelope, deviation_matrix, envelope_for

DEFAULT_TAIL_TOL = 1e-9
MAX_LAG = 200_000


@dataclass(frozen=True, eq=False)
class AutocovarianceSummary:
    """
    gamma[t] = Cov_pi(f(X^0), f(X^t)) for t = 0..t_max, and
    sigma_sq = gamma(0) + 2 * sum_{t>=1} gamma(t) truncated at `truncation_lag`.
    """

    gamma: np.ndarray
    sigma_sq: float
    truncation_tail: float
    truncation_lag: int
    envelope: MixingEnvelope

    def lag_bound(self, t: int, a_max: int, mean: float) -> float:
        """Upper bound on |gamma(t)| implied by the mixing envelope."""
        return 2.0 * (a_max + mean) * a_max * self.envelope.bound(t)


def _tail_bound(a_max: int, mean: float, envelope: MixingEnvelope, lag: int) -> float:
    # Bound on 2 * sum_{t > lag} |gamma(t)|.
    if envelope.exact_mixing:
        return 0.0
    per_lag = 2.0 * (a_max + mean) * a_max * envelope.c_const
    return 2.0 * per_lag * envelope.alpha ** (lag + 1) / (1.0 - envelope.alpha)


def autocovariance(
    chain: FiniteMarkovChain,
    t_max: int,
    tail_tol: float = DEFAULT_TAIL_TOL,
    envelope: Optional[MixingEnvelope] = None,
) -> AutocovarianceSummary:
    """
    Exact autocovariance by powers of P - Pi.

    Args:
        chain: A valid chain
        t_max: Largest lag reported in `gamma`
        tail_tol: Certified bound on the error of the truncated sigma_sq
        envelope: Mixing envelope; fitted from the chain when omitted

    Returns:
        AutocovarianceSummary: gamma(0..t_max), sigma_sq and the truncation bound
    """
    if tail_tol <= 0:
        raise ValueError("tail_tol must be positive")
    if t_max < 0:
        raise ValueError("t_max must be non-negative")

    stationary = stationary_distribution(chain)
    envelope = envelope or envelope_for(chain)
    mean = stationary.mean_emission
    a_max = chain.a_max

    lag = 0
    while _tail_bound(a_max, mean, envelope, lag) >= tail_tol and lag < MAX_LAG:
        lag += 1
    if lag >= MAX_LAG:
        logger.warning(f"Autocovariance truncation capped at lag {MAX_LAG}")
    tail = _tail_bound(a_max, mean, envelope, lag)

    f = chain.emission.astype(np.longdouble)
    pi = stationary.probabilities.astype(np.longdouble)
    weights = pi * (f - np.longdouble(mean))
    deviation = deviation_matrix(chain, stationary)

    horizon = max(t_max, lag)
    gamma = np.empty(horizon + 1, dtype=np.float64)
    gamma[0] = float(weights @ (f - np.longdouble(mean)))
    vector = f.copy()
    for t in range(1, horizon + 1):
        vector = deviation @ vector
        gamma[t] = float(weights @ vector)

    sigma_sq = math.fsum([gamma[0]] + [2.0 * g for g in gamma[1:lag + 1]])
    sigma_sq = max(sigma_sq, 0.0)
    return AutocovarianceSummary(
        gamma=gamma[: t_max + 1].copy(),
        sigma_sq=sigma_sq,
        truncation_tail=tail,
        truncation_lag=lag,
        envelope=envelope,
    )


def finite_window_variance(chain: FiniteMarkovChain, m: int) -> float:
    """
    Var(sum_{t=1..m} f(X^t) | X^0 ~ pi) / m, computed exactly.

    Equals gamma(0) + 2 * sum_{t=1}^{m-1} (1 - t/m) gamma(t) and tends to
    sigma_sq as m grows.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    summary = autocovariance(chain, t_max=m)
    weights = 1.0 - np.arange(1, m) / m
    return float(summary.gamma[0] + 2.0 * np.sum(weights * summary.gamma[1:m]))
