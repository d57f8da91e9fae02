"""
Geometric mixing of finite chains.
Computes the exact worst-start total-variation profile and fits the
envelope d(m) <= C * alpha^m used by the heavy-traffic bounds.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from loguru import logger

from src.errors import EnvelopeInfeasible
from src.markov.chain import FiniteMarkovChain, StationaryDistribution, stationary_distribution

# Smallest alpha the fit grid can represent; also used for exact mixing.
ALPHA_FLOOR = 1e-3
ALPHA_GRID = np.linspace(ALPHA_FLOOR, 1.0 - ALPHA_FLOOR, 999)
# Profile entries at or below this level are treated as numerically zero.
ZERO_TOL = 1e-14
# Entries above ZERO_TOL but below this level carry no usable rate information.
NOISE_FLOOR = 1e-13
SOUNDNESS_TOL = 1e-12


@dataclass(frozen=True)
class MixingEnvelope:
    """Constants (C, alpha) with max_x TV(P^m(x,.), pi) <= C * alpha^m for m <= horizon."""

    c_const: float
    alpha: float
    horizon: int
    exact_mixing: bool = False

    def bound(self, m: int) -> float:
        """C * alpha^m, or 0 when the chain mixes in one step."""
        if self.exact_mixing:
            return 0.0
        return self.c_const * self.alpha ** m

    def mixing_time(self, delta: float) -> int:
        """Smallest m >= 1 with C * alpha^m <= delta."""
        if delta <= 0:
            raise ValueError("delta must be positive")
        if self.exact_mixing or self.c_const * self.alpha <= delta:
            return 1
        return max(1, math.ceil(math.log(delta / self.c_const) / math.log(self.alpha)))


def deviation_matrix(chain: FiniteMarkovChain, stationary: Optional[StationaryDistribution] = None) -> np.ndarray:
    """
    P - Pi in extended precision, Pi having every row equal to pi.

    (P - Pi)^m = P^m - Pi for m >= 1, so powers of this matrix give the
    distance to stationarity without subtracting near-equal numbers.
    """
    stationary = stationary or stationary_distribution(chain)
    p = chain.transition.astype(np.longdouble)
    pi = stationary.probabilities.astype(np.longdouble)
    return p - pi[np.newaxis, :]


def mixing_profile(chain: FiniteMarkovChain, m_max: int) -> np.ndarray:
    """
    Worst-start total-variation distances to stationarity.

    Args:
        chain: A valid chain
        m_max: Largest number of steps

    Returns:
        np.ndarray: d[m-1] = max_x (1/2) sum_y |P^m(x,y) - pi(y)| for m = 1..m_max
    """
    if m_max < 1:
        raise ValueError("m_max must be at least 1")
    deviation = deviation_matrix(chain)
    power = deviation.copy()
    profile = np.empty(m_max, dtype=np.float64)
    for m in range(m_max):
        profile[m] = float(0.5 * np.max(np.sum(np.abs(power), axis=1)))
        power = power @ deviation
    return profile


def _head_dominates(profile: np.ndarray, m: np.ndarray, split: int, alpha: float) -> bool:
    scaled = np.log(profile) - m * math.log(alpha)
    head = scaled[:split].max()
    tail = scaled[split:].max() if split < len(scaled) else -np.inf
    return tail <= head + 1e-9


def fit_mixing_envelope(profile: Sequence[float]) -> MixingEnvelope:
    """
    Fit the tightest geometric envelope to a mixing profile.

    Alpha is the smallest value for which the constant fitted on the first
    half of the informative profile still dominates the second half; it is
    located on a coarse grid and refined by bisection. C is then the least
    constant making the envelope hold on the whole profile.

    Args:
        profile: d(1), d(2), ... as returned by `mixing_profile`

    Returns:
        MixingEnvelope: The fitted constants

    Raises:
        ValueError: If the profile has fewer than 3 points
        EnvelopeInfeasible: If the profile does not decay below 1
    """
    d = np.asarray(profile, dtype=np.float64)
    if d.size < 3:
        raise ValueError("A mixing profile needs at least 3 points")
    horizon = int(d.size)

    if d.max() <= ZERO_TOL:
        return MixingEnvelope(c_const=1.0, alpha=ALPHA_FLOOR, horizon=horizon, exact_mixing=True)
    if d[-1] >= 1.0 - 1e-12:
        logger.error(f"Mixing profile ends at {d[-1]!r}; chain shows no mixing")
        raise EnvelopeInfeasible(f"Total variation still {d[-1]!r} after {horizon} steps")

    informative = np.flatnonzero(d > NOISE_FLOOR)
    # The informative entries form a prefix since d(m) is driven to zero geometrically.
    count = int(informative[-1]) + 1
    values = np.maximum(d[:count], NOISE_FLOOR)
    steps = np.arange(1, count + 1, dtype=np.float64)

    if count == 1:
        alpha = max(float(values[0]), ALPHA_FLOOR)
        return MixingEnvelope(c_const=float(values[0]) / alpha, alpha=alpha, horizon=horizon)

    split = (count + 1) // 2
    feasible = [a for a in ALPHA_GRID if _head_dominates(values, steps, split, a)]
    if not feasible:
        raise EnvelopeInfeasible("No alpha below 1 gives a dominating envelope")
    hi = float(feasible[0])
    lo = ALPHA_FLOOR / 2 if hi == ALPHA_GRID[0] else float(ALPHA_GRID[np.searchsorted(ALPHA_GRID, hi) - 1])
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _head_dominates(values, steps, split, mid):
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-12:
            break
    alpha = hi

    c_const = float(np.max(d[:count] / alpha ** steps))
    # Tail entries below the noise floor are covered by the soundness tolerance.
    envelope = MixingEnvelope(c_const=c_const, alpha=alpha, horizon=horizon)
    logger.debug(f"Fitted mixing envelope C={c_const:.6g}, alpha={alpha:.6g} over {horizon} steps")
    return envelope


def envelope_for(chain: FiniteMarkovChain, horizon: int = 100) -> MixingEnvelope:
    """Profile a chain and fit its envelope in one call."""
    return fit_mixing_envelope(mixing_profile(chain, horizon))
