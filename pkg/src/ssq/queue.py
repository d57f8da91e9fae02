"""
Discrete-time single-server queue with Markov-modulated arrivals.

Q^{t+1} = max(Q^t + A^t - S^t, 0) and U^t = Q^{t+1} - (Q^t + A^t - S^t).
Runs are simulated in chunks with the Lindley recursion written as a
reflected random walk, so each chunk is a handful of vectorised operations.
"""

import math
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from src.arrivals.families import ArrivalFamily
from src.errors import ConfigInvalid, InvariantViolation, UnstableRun
from src.markov.sampling import ChainSampler
from src.stats.batch_means import DEFAULT_BATCHES, DEFAULT_CONFIDENCE, BatchMeans

CHUNK = 1 << 18
MIN_BURN_IN = 100_000
DEFAULT_THETAS = (-0.5, -1.0, -2.0)
IDENTITY_WIDTHS = 4.0


@dataclass(frozen=True)
class ServiceDistribution:
    """I.i.d. potential service S^t on a finite support {0..S_max}."""

    values: Tuple[int, ...]
    probabilities: Tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(self.probabilities) or not self.values:
            raise ValueError("values and probabilities must be non-empty and of equal length")
        if any(v < 0 for v in self.values) or any(p < 0 for p in self.probabilities):
            raise ValueError("Service values and probabilities must be non-negative")
        if abs(math.fsum(self.probabilities) - 1.0) > 1e-12:
            raise ValueError("Service probabilities must sum to 1")

    @classmethod
    def bernoulli(cls, mu: float) -> "ServiceDistribution":
        if not 0.0 < mu <= 1.0:
            raise ValueError("Bernoulli service needs mu in (0, 1]")
        if mu == 1.0:
            return cls(values=(1,), probabilities=(1.0,))
        return cls(values=(0, 1), probabilities=(1.0 - mu, mu))

    @classmethod
    def from_mapping(cls, probabilities: Mapping[int, float]) -> "ServiceDistribution":
        keys = sorted(probabilities)
        return cls(values=tuple(int(k) for k in keys), probabilities=tuple(float(probabilities[k]) for k in keys))

    @property
    def mean(self) -> float:
        return math.fsum(v * p for v, p in zip(self.values, self.probabilities))

    @property
    def variance(self) -> float:
        mu = self.mean
        return math.fsum(p * (v - mu) ** 2 for v, p in zip(self.values, self.probabilities))

    @property
    def s_max(self) -> int:
        return max(v for v, p in zip(self.values, self.probabilities) if p > 0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.choice(np.asarray(self.values, dtype=np.int64), size=size, p=np.asarray(self.probabilities))


def default_burn_in(eps: float) -> int:
    """max(10 / eps^2, 10^5) slots; relaxation time grows like 1/eps^2."""
    return max(math.ceil(10.0 / eps ** 2), MIN_BURN_IN)


@dataclass(frozen=True, eq=False)
class SsqConfig:
    """One single-server run at a fixed heavy-traffic parameter."""

    family: ArrivalFamily
    epsilon: float
    service: ServiceDistribution
    horizon: int
    burn_in: Optional[int] = None
    seed: int = 0
    n_batches: int = DEFAULT_BATCHES
    confidence: float = DEFAULT_CONFIDENCE
    thetas: Tuple[float, ...] = DEFAULT_THETAS
    check_identities: bool = True

    def __post_init__(self):
        errors = []
        mu = self.service.mean
        if self.family.is_matrix:
            errors.append("family: single-server runs need a scalar family")
        elif abs(float(self.family.target_rate) - mu) > 1e-12:
            errors.append(f"service: mean {mu!r} must equal the family target {float(self.family.target_rate)!r}")
        if not 0.0 < self.epsilon < mu:
            errors.append(f"epsilon: {self.epsilon!r} must lie in (0, {mu!r})")
        if self.horizon <= self.effective_burn_in:
            errors.append(f"horizon: {self.horizon} must exceed burn-in {self.effective_burn_in}")
        elif self.horizon - self.effective_burn_in < self.n_batches:
            errors.append("horizon: recorded slots fewer than batches")
        if any(theta > 0 for theta in self.thetas):
            errors.append("thetas: MGF arguments must be <= 0")
        if errors:
            raise ConfigInvalid(errors)

    @property
    def effective_burn_in(self) -> int:
        return self.burn_in if self.burn_in is not None else default_burn_in(self.epsilon)


@dataclass(frozen=True)
class SsqStats:
    """Steady-state estimates from one run (recorded slots only)."""

    epsilon: float
    mean_q: float
    scaled_mean_q: float
    mean_unused: float
    mgf_estimates: Dict[float, float]
    ci_halfwidths: Dict[str, float]
    std_errors: Dict[str, float]
    quarter_means: Tuple[float, ...]
    slots: int
    seed: int


def ssq_step(q: int, a: int, s: int) -> Tuple[int, int]:
    """
    One slot of the queue.

    Returns:
        Tuple[int, int]: (Q^{t+1}, U^t) with Q^{t+1} * U^t = 0
    """
    if min(q, a, s) < 0:
        raise ValueError("q, a and s must be non-negative")
    raw = q + a - s
    q_next = max(raw, 0)
    return q_next, q_next - raw


def lindley_chunk(q0: int, arrivals: np.ndarray, service: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Vectorised Lindley recursion over a chunk starting from Q = q0.

    Returns:
        Tuple of (Q^t, Q^{t+1}, U^t) arrays for every slot of the chunk
    """
    walk = q0 + np.cumsum(arrivals - service)
    idle = np.maximum(0, -np.minimum.accumulate(walk))
    q_next = walk + idle
    unused = np.diff(idle, prepend=0)
    q_now = np.concatenate(([q0], q_next[:-1]))
    return q_now, q_next, unused


def check_slot_identities(q_next: np.ndarray, unused: np.ndarray, service: np.ndarray) -> None:
    """Q^{t+1} U^t = 0 and 0 <= U^t <= S^t on every slot."""
    if np.any(q_next * unused != 0):
        raise InvariantViolation("complementary_slackness", "Q^{t+1} * U^t != 0 on some slot")
    if np.any(unused < 0) or np.any(unused > service):
        raise InvariantViolation("unused_below_service", "U^t outside [0, S^t] on some slot")


def is_unstable(quarters: Sequence[float]) -> bool:
    """Quarter means strictly increasing with the last more than twice the first."""
    increasing = all(b > a for a, b in zip(quarters, quarters[1:]))
    return increasing and quarters[-1] > 2.0 * max(quarters[0], 1.0)


def simulate_ssq(config: SsqConfig) -> SsqStats:
    """
    Simulate one run and estimate steady-state quantities by batch means.

    Starts from Q^0 = 0 with the chain in a stationary draw, discards the
    burn-in and records Q^t, U^t and exp(eps * theta * Q^t).

    Raises:
        InvariantViolation: If a per-slot identity or the E[U] = eps identity fails
        UnstableRun: If the queue keeps growing over the recorded horizon
    """
    eps = config.epsilon
    burn_in = config.effective_burn_in
    recorded = config.horizon - burn_in
    chain = config.family.chain(eps)

    arrival_seq, service_seq = np.random.SeedSequence(config.seed).spawn(2)
    sampler = ChainSampler(chain, np.random.default_rng(arrival_seq))
    service_rng = np.random.default_rng(service_seq)

    accumulator = BatchMeans(recorded, n_series=2 + len(config.thetas), n_batches=config.n_batches,
                             confidence=config.confidence)
    logger.info(f"Single-server run eps={eps}, slots={config.horizon}, burn-in={burn_in}, seed={config.seed}")

    q = 0
    t = 0
    while t < config.horizon:
        k = min(CHUNK, config.horizon - t)
        arrivals = sampler.next_emissions(k)
        service = config.service.sample(service_rng, k)
        q_now, q_next, unused = lindley_chunk(q, arrivals, service)
        if config.check_identities:
            check_slot_identities(q_next, unused, service)
        start = max(burn_in - t, 0)
        if start < k:
            q_rec = q_now[start:].astype(np.float64)
            rows = [q_rec, unused[start:]] + [np.exp(eps * theta * q_rec) for theta in config.thetas]
            accumulator.add(np.vstack(rows))
        q = int(q_next[-1])
        t += k
        logger.debug(f"eps={eps}: {t}/{config.horizon} slots, Q={q}")

    queue = accumulator.estimate(0)
    unused_est = accumulator.estimate(1)
    mgf = {}
    halfwidths = {"mean_q": queue.half_width, "mean_unused": unused_est.half_width}
    std_errors = {"mean_q": queue.std_error, "mean_unused": unused_est.std_error}
    for offset, theta in enumerate(config.thetas, start=2):
        estimate = accumulator.estimate(offset)
        mgf[theta] = estimate.mean
        halfwidths[f"mgf_{theta}"] = estimate.half_width
        std_errors[f"mgf_{theta}"] = estimate.std_error

    quarters = accumulator.quarter_means(0)
    if is_unstable(quarters):
        logger.error(f"Unstable single-server run at eps={eps}: quarter means {quarters}")
        raise UnstableRun(list(quarters))

    if config.check_identities and abs(unused_est.mean - eps) > IDENTITY_WIDTHS * unused_est.half_width:
        logger.error(f"E[U] identity failed: mean unused {unused_est.mean!r} vs eps {eps!r}")
        raise InvariantViolation(
            "unused_service_identity",
            f"|{unused_est.mean:.6g} - {eps}| > {IDENTITY_WIDTHS} x {unused_est.half_width:.3g}",
        )

    return SsqStats(
        epsilon=eps,
        mean_q=queue.mean,
        scaled_mean_q=eps * queue.mean,
        mean_unused=unused_est.mean,
        mgf_estimates=mgf,
        ci_halfwidths=halfwidths,
        std_errors=std_errors,
        quarter_means=quarters,
        slots=recorded,
        seed=config.seed,
    )
