"""
Heavy-traffic predictions for the single-server queue: the limit of
E[eps Q], finite-eps bounds, the drift window m(eps) and the Laplace
transform of the exponential limit.
"""

import math
from dataclasses import dataclass
from typing import Sequence

from src.errors import VacuousBound
from src.markov.mixing import MixingEnvelope


def heavy_traffic_mean(sigma_a_sq: float, sigma_s_sq: float) -> float:
    """lim E[eps Q] = (sigma_a^2 + sigma_s^2) / 2."""
    if sigma_a_sq < 0 or sigma_s_sq < 0:
        raise ValueError("Variances must be non-negative")
    return (sigma_a_sq + sigma_s_sq) / 2.0


def laplace_prediction(theta: float, sigma_a_sq: float, sigma_s_sq: float) -> float:
    """Limit of E[exp(eps theta Q)] for theta <= 0: the exponential law's transform."""
    if theta > 0:
        raise ValueError("theta must be <= 0")
    return 1.0 / (1.0 - theta * heavy_traffic_mean(sigma_a_sq, sigma_s_sq))


def window_m(eps: float, a_max: int, envelope: MixingEnvelope) -> int:
    """
    Smallest m >= 1 with 2 A_max C (1 - alpha^m) / (1 - alpha) < m eps / 2.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if envelope.exact_mixing:
        return 1
    c, alpha = envelope.c_const, envelope.alpha
    m = 1
    while 2.0 * a_max * c * (1.0 - alpha ** m) / (1.0 - alpha) >= m * eps / 2.0:
        m += 1
    return m


def claim_window(eps: float) -> int:
    """m(eps) = floor(1 / sqrt(eps)), the window under which the bounds close."""
    return max(1, math.floor(1.0 / math.sqrt(eps)))


@dataclass(frozen=True)
class PrelimitBounds:
    """Bounds on E[eps Q] at a fixed eps; `upper` is inf when vacuous."""

    lower: float
    upper: float
    m: int
    mixing_term: float

    @property
    def upper_vacuous(self) -> bool:
        return math.isinf(self.upper)

    def contains(self, value: float, slack: float = 0.0) -> bool:
        return self.lower - slack <= value <= self.upper + slack


def prelimit_bounds(
    eps: float,
    m: int,
    gamma_prefix: Sequence[float],
    sigma_s_sq: float,
    a_max: int,
    s_max: int,
    lam: float,
    envelope: MixingEnvelope,
    allow_vacuous: bool = False,
) -> PrelimitBounds:
    """
    Lower and upper bounds on E[eps Q] valid for every eps.

    Args:
        eps: Heavy-traffic parameter
        m: Drift window
        gamma_prefix: gamma(0), ..., gamma(m) of the arrival chain at eps
        sigma_s_sq: Service variance
        a_max: Peak arrivals per slot
        s_max: Peak service per slot
        lam: Arrival rate at eps
        envelope: Mixing envelope of the arrival chain
        allow_vacuous: Return an infinite upper bound instead of raising

    Raises:
        VacuousBound: If 1 - 2 A_max C alpha^m / eps <= 0 and vacuous bounds are not allowed
    """
    if eps <= 0 or m < 1:
        raise ValueError("Need eps > 0 and m >= 1")
    if len(gamma_prefix) < m + 1:
        raise ValueError(f"gamma_prefix needs {m + 1} values, got {len(gamma_prefix)}")

    correlation = math.fsum([gamma_prefix[0]] + [2.0 * g for g in gamma_prefix[1:m + 1]])
    drift = 2.0 * m * (a_max + lam) * eps
    mixing_term = 2.0 * a_max * envelope.bound(m) / eps

    upper_denominator = 2.0 * (1.0 - mixing_term)
    if upper_denominator > 0:
        upper = (correlation + sigma_s_sq + drift + eps ** 2) / upper_denominator
    elif allow_vacuous:
        upper = math.inf
    else:
        raise VacuousBound(f"1 - 2 A_max C alpha^m / eps = {1.0 - mixing_term:.4g} <= 0 at eps={eps}, m={m}")

    lower = (correlation + sigma_s_sq - drift - s_max * eps + eps ** 2) / (2.0 * (1.0 + mixing_term))
    return PrelimitBounds(lower=max(lower, 0.0), upper=upper, m=m, mixing_term=mixing_term)
