"""
Slotted simulation of an N x N input-queued switch under MaxWeight.

Each slot: arrivals A^t join the queues, the MaxWeight matching S^t serves
one packet per matched queue, Q^{t+1} = max(Q^t + A^t - S^t, 0) and the
unused service is U^t = Q^{t+1} - (Q^t + A^t - S^t).
"""

import math
from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Optional, Tuple, Union

import numpy as np
from loguru import logger

from src.arrivals.families import ArrivalFamily, Index
from src.arrivals.rates import min_rate
from src.errors import ConfigInvalid, InvariantViolation, UnstableRun
from src.markov.chain import FiniteMarkovChain
from src.markov.sampling import ChainSampler
from src.ssq.queue import IDENTITY_WIDTHS, default_burn_in, is_unstable
from src.stats.batch_means import DEFAULT_BATCHES, DEFAULT_CONFIDENCE, BatchMeans
from src.switch.geometry import CapacityPosition, capacity_position, project_K, project_L
from src.switch.scheduler import Matcher, MaxWeightScheduler, Schedule

SWITCH_CHUNK = 1 << 14
DEFAULT_METRIC_STRIDE = 8
NORM_ORDER_TOL = 1e-9


@dataclass(frozen=True)
class SwitchStats:
    """Steady-state estimates from one switch run (recorded slots only)."""

    epsilon: float
    n: int
    scaled_sum_q: float
    mean_sum_q: float
    perp_k_sq: float
    perp_l_sq: float
    parallel_k_sq: float
    sum_unused: float
    ci_halfwidths: Dict[str, float]
    std_errors: Dict[str, float]
    quarter_means: Tuple[float, ...]
    slots: int
    seed: int


def _permutation(schedule: Union[Schedule, np.ndarray]) -> np.ndarray:
    if isinstance(schedule, Schedule):
        return np.asarray(schedule.permutation, dtype=np.int64)
    return np.asarray(schedule, dtype=np.int64)


def switch_step(
    q: np.ndarray,
    schedule: Union[Schedule, np.ndarray],
    arrivals: np.ndarray,
    check: bool = True,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Advance every queue by one slot.

    Args:
        q: N x N queue lengths Q^t
        schedule: Perfect matching S^t
        arrivals: N x N arrivals A^t
        check: Assert the per-slot identities

    Returns:
        Tuple of (Q^{t+1}, U^t)

    Raises:
        InvariantViolation: If check is on and an identity fails
    """
    perm = _permutation(schedule)
    n = perm.size
    raw = np.asarray(q, dtype=np.int64) + np.asarray(arrivals, dtype=np.int64)
    raw[np.arange(n), perm] -= 1
    q_next = np.maximum(raw, 0)
    unused = q_next - raw
    if check:
        service = np.zeros((n, n), dtype=np.int64)
        service[np.arange(n), perm] = 1
        check_switch_identities(q_next[np.newaxis], unused[np.newaxis], service[np.newaxis])
    return q_next, unused


def check_switch_identities(q_next: np.ndarray, unused: np.ndarray, service: np.ndarray) -> None:
    """
    Per-slot identities over a stack of slots, each array shaped (k, N, N).

    U_ij Q'_ij = 0, 0 <= U_ij <= S_ij, and every row and column of U sums to 0 or 1.
    """
    if np.any(q_next * unused != 0):
        raise InvariantViolation("switch_complementary_slackness", "U_ij * Q'_ij != 0 on some slot")
    if np.any(unused < 0) or np.any(unused > service):
        raise InvariantViolation("switch_unused_below_service", "U_ij outside [0, S_ij] on some slot")
    if np.any(unused.sum(axis=2) > 1) or np.any(unused.sum(axis=1) > 1):
        raise InvariantViolation("switch_unused_port_sums", "a port has more than one unit of unused service")


def collapse_metrics(q: np.ndarray) -> Tuple[float, float, float]:
    """
    (||q_perp_K||^2, ||q_perp_L||^2, ||q_parallel_K||^2) for one queue matrix.

    Raises:
        InvariantViolation: If ||q_perp_L||^2 > ||q_perp_K||^2
    """
    x = np.asarray(q, dtype=np.float64)
    decomposition = project_K(x)
    perp_k = float(np.sum(decomposition.perp ** 2))
    perp_l = float(np.sum((x - project_L(x)) ** 2))
    parallel_k = float(np.sum(decomposition.parallel ** 2))
    if perp_l > perp_k + NORM_ORDER_TOL * max(1.0, float(np.sum(x ** 2))):
        raise InvariantViolation("collapse_norm_order", f"||q_perp_L||^2={perp_l:.6g} > ||q_perp_K||^2={perp_k:.6g}")
    return perp_k, perp_l, parallel_k


def v_min_threshold(v: np.ndarray) -> float:
    """v_min / (2 ||v||_F), the largest eps for which the collapse bound is stated."""
    return min_rate(v) / (2.0 * float(np.linalg.norm(v)))


def _queue_samplers(chains: Mapping[Index, FiniteMarkovChain], n: int, seed: int) -> Dict[Index, ChainSampler]:
    samplers = {}
    for i in range(n):
        for j in range(n):
            stream = np.random.SeedSequence(seed, spawn_key=(0, i, j))
            samplers[(i, j)] = ChainSampler(chains[(i, j)], np.random.default_rng(stream))
    return samplers


def _scheduler(n: int, seed: int, matcher: Optional[Matcher]) -> MaxWeightScheduler:
    return MaxWeightScheduler(n, np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,))), matcher)


def _arrival_block(samplers: Dict[Index, ChainSampler], n: int, k: int) -> np.ndarray:
    block = np.empty((k, n, n), dtype=np.int64)
    for (i, j), sampler in samplers.items():
        block[:, i, j] = sampler.next_emissions(k)
    return block


def _run_chunk(
    q: np.ndarray,
    arrivals: np.ndarray,
    scheduler: MaxWeightScheduler,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    k, n, _ = arrivals.shape
    q_now = np.empty_like(arrivals)
    q_next = np.empty_like(arrivals)
    unused = np.empty_like(arrivals)
    service = np.zeros_like(arrivals)
    rows = np.arange(n)
    for step in range(k):
        q_now[step] = q
        perm = scheduler.choose(q)
        q, unused[step] = switch_step(q, perm, arrivals[step], check=False)
        q_next[step] = q
        service[step, rows, perm] = 1
    return q_now, q_next, unused, service


def simulate_switch(
    family: ArrivalFamily,
    epsilon: float,
    horizon: int,
    burn_in: Optional[int] = None,
    seed: int = 0,
    n_batches: int = DEFAULT_BATCHES,
    confidence: float = DEFAULT_CONFIDENCE,
    metric_stride: int = DEFAULT_METRIC_STRIDE,
    matcher: Optional[Matcher] = None,
    check_identities: bool = True,
) -> SwitchStats:
    """
    Simulate one switch run from empty queues and estimate steady-state quantities.

    Queue (i, j) draws arrivals from its own stream (seed, 0, i, j); the
    scheduler's tie-breaking uses stream (seed, 1). Collapse metrics are
    sampled every `metric_stride` recorded slots.

    Args:
        family: Matrix family targeting a saturated rate matrix
        epsilon: Heavy-traffic parameter in (0, 1)
        horizon: Total slots including burn-in
        burn_in: Discarded slots, default max(10 / eps^2, 10^5)
        seed: Root seed
        n_batches: Batches for the confidence intervals
        confidence: CI level
        metric_stride: Slots between collapse-metric samples
        matcher: Assignment solver for the scheduler
        check_identities: Assert per-slot and mean identities

    Returns:
        SwitchStats: Means and CI half-widths over the recorded slots

    Raises:
        ConfigInvalid: If the arguments are inconsistent
        InvariantViolation: If an identity fails
        UnstableRun: If the total queue keeps growing
    """
    burn = burn_in if burn_in is not None else default_burn_in(epsilon)
    errors = []
    if not family.is_matrix:
        errors.append("family: switch runs need a matrix family")
    elif capacity_position(family.target_rate) != CapacityPosition.ON_FACE_F:
        errors.append("family: target rate matrix must be doubly stochastic")
    if not 0.0 < epsilon < 1.0:
        errors.append(f"epsilon: {epsilon!r} must lie in (0, 1)")
    if metric_stride < 1:
        errors.append("metric_stride: must be >= 1")
    elif horizon - burn < n_batches * metric_stride:
        errors.append(f"horizon: {horizon} leaves fewer than {n_batches * metric_stride} recorded slots after burn-in {burn}")
    if errors:
        raise ConfigInvalid(errors)

    n = family.n
    threshold = v_min_threshold(family.target_rate)
    if epsilon >= threshold:
        logger.warning(f"eps={epsilon} is not below v_min / (2 ||v||) = {threshold:.4g}; collapse bounds may not apply")

    recorded = horizon - burn
    n_metric = math.ceil(recorded / metric_stride)
    totals = BatchMeans(recorded, n_series=2, n_batches=n_batches, confidence=confidence)
    geometry = BatchMeans(n_metric, n_series=3, n_batches=n_batches, confidence=confidence)

    samplers = _queue_samplers(family.chains(epsilon), n, seed)
    scheduler = _scheduler(n, seed, matcher)
    logger.info(f"Switch run N={n}, eps={epsilon}, slots={horizon}, burn-in={burn}, seed={seed}")

    q = np.zeros((n, n), dtype=np.int64)
    t = 0
    while t < horizon:
        k = min(SWITCH_CHUNK, horizon - t)
        q_now, q_next, unused, service = _run_chunk(q, _arrival_block(samplers, n, k), scheduler)
        if check_identities:
            check_switch_identities(q_next, unused, service)
        start = max(burn - t, 0)
        if start < k:
            totals.add(np.vstack([q_now[start:].sum(axis=(1, 2)), unused[start:].sum(axis=(1, 2))]))
            offset = (-(t + start - burn)) % metric_stride
            sampled = [collapse_metrics(x) for x in q_now[start + offset::metric_stride]]
            if sampled:
                geometry.add(np.asarray(sampled).T)
        q = q_next[-1]
        t += k
        logger.debug(f"N={n}, eps={epsilon}: {t}/{horizon} slots, sum Q={int(q.sum())}")

    sum_q = totals.estimate(0)
    sum_u = totals.estimate(1)
    perp_k, perp_l, parallel_k = (geometry.estimate(series) for series in range(3))

    quarters = totals.quarter_means(0)
    if is_unstable(quarters):
        logger.error(f"Unstable switch run at eps={epsilon}: quarter means {quarters}")
        raise UnstableRun(list(quarters))

    if check_identities and abs(sum_u.mean - n * epsilon) > IDENTITY_WIDTHS * sum_u.half_width:
        logger.error(f"E[sum U] identity failed: {sum_u.mean!r} vs N eps = {n * epsilon!r}")
        raise InvariantViolation(
            "switch_unused_service_identity",
            f"|{sum_u.mean:.6g} - {n * epsilon}| > {IDENTITY_WIDTHS} x {sum_u.half_width:.3g}",
        )

    names = ("sum_q", "sum_unused", "perp_k_sq", "perp_l_sq", "parallel_k_sq")
    estimates = (sum_q, sum_u, perp_k, perp_l, parallel_k)
    return SwitchStats(
        epsilon=epsilon,
        n=n,
        scaled_sum_q=epsilon * sum_q.mean,
        mean_sum_q=sum_q.mean,
        perp_k_sq=perp_k.mean,
        perp_l_sq=perp_l.mean,
        parallel_k_sq=parallel_k.mean,
        sum_unused=sum_u.mean,
        ci_halfwidths={name: e.half_width for name, e in zip(names, estimates)},
        std_errors={name: e.std_error for name, e in zip(names, estimates)},
        quarter_means=quarters,
        slots=recorded,
        seed=seed,
    )


def chains_for_rates(family: ArrivalFamily, rates: np.ndarray) -> Dict[Index, FiniteMarkovChain]:
    """Per-queue chains of the family's shape at an arbitrary rate matrix."""
    rates = np.asarray(rates, dtype=np.float64)
    if not family.is_matrix or rates.shape != family.target_rate.shape:
        raise ValueError(f"Rates of shape {rates.shape} do not fit the family")
    burstiness = np.broadcast_to(family.burstiness, rates.shape)
    return {index: family.builder(float(rates[index]), float(burstiness[index])) for index in family.indices()}


def switch_sum_trace(
    chains: Mapping[Index, FiniteMarkovChain],
    horizon: int,
    seed: int = 0,
    record_at: Iterable[int] = (),
    matcher: Optional[Matcher] = None,
) -> Dict[int, int]:
    """
    Total queue length sum_ij Q_ij^t at the requested slots.

    Works for any arrival rates, including ones outside the capacity
    region, and is used for throughput-optimality checks.

    Args:
        chains: Chain per queue (i, j)
        horizon: Slots to simulate
        seed: Root seed
        record_at: Slots t (1..horizon) at which to record sum Q^t

    Returns:
        Dict[int, int]: Slot to total queue length
    """
    n = int(round(math.sqrt(len(chains))))
    wanted = sorted(set(int(t) for t in record_at))
    if any(t < 1 or t > horizon for t in wanted):
        raise ValueError(f"record_at slots must lie in [1, {horizon}]")
    samplers = _queue_samplers(chains, n, seed)
    scheduler = _scheduler(n, seed, matcher)

    trace = {}
    q = np.zeros((n, n), dtype=np.int64)
    t = 0
    while t < horizon:
        k = min(SWITCH_CHUNK, horizon - t)
        _, q_next, _, _ = _run_chunk(q, _arrival_block(samplers, n, k), scheduler)
        for slot in wanted:
            if t < slot <= t + k:
                trace[slot] = int(q_next[slot - t - 1].sum())
        q = q_next[-1]
        t += k
    return trace
