"""
Sample paths of finite chains.

The sampler walks the jump chain (geometric holding runs followed by a jump
drawn from the off-diagonal row), which touches Python once per state change
rather than once per slot. Uniforms are drawn in fixed blocks, so a path does
not depend on how it is split into chunks.
"""

import bisect
import math
from dataclasses import dataclass
from typing import Hashable, Optional, Sequence, Tuple, Union

import numpy as np

from src.markov.chain import FiniteMarkovChain, stationary_distribution

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]

UNIFORM_BLOCK = 1 << 16


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Generator from an int, a SeedSequence or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


class ChainSampler:
    """
    Resumable sampler emitting f(X^t) chunk by chunk.

    The first emitted value is f(X^0); X^0 is the given state, a draw from
    the given distribution, or a stationary draw.
    """

    def __init__(
        self,
        chain: FiniteMarkovChain,
        seed: SeedLike = None,
        initial_state: Optional[Hashable] = None,
        initial_distribution: Optional[Sequence[float]] = None,
    ):
        self.chain = chain
        self._rng = make_rng(seed)
        self._buffer = np.empty(0)
        self._cursor = 0

        n = chain.n_states
        p = chain.transition
        self._iid_cdf = np.cumsum(p[0]) if chain.is_iid else None
        self._log_stay = [math.log(p[x, x]) if p[x, x] > 0 else -math.inf for x in range(n)]
        self._jump_cdf = []
        for x in range(n):
            off = p[x].copy()
            off[x] = 0.0
            total = off.sum()
            cdf = np.cumsum(off / total) if total > 0 else np.ones(n)
            self._jump_cdf.append(cdf.tolist())

        if initial_state is not None:
            start = chain.index_of(initial_state)
        else:
            if initial_distribution is None:
                weights = stationary_distribution(chain).probabilities
            else:
                weights = np.asarray(initial_distribution, dtype=np.float64)
                if weights.shape != (n,) or np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
                    raise ValueError("initial_distribution must be a probability vector over the states")
            start = self._draw_index(np.cumsum(weights))
        self.state = start
        self._remaining = 0 if n == 1 else self._run_length(start)

    def _uniform(self) -> float:
        if self._cursor >= self._buffer.size:
            self._buffer = self._rng.random(UNIFORM_BLOCK)
            self._cursor = 0
        value = self._buffer[self._cursor]
        self._cursor += 1
        return float(value)

    def _uniforms(self, count: int) -> np.ndarray:
        parts = []
        while count > 0:
            if self._cursor >= self._buffer.size:
                self._buffer = self._rng.random(UNIFORM_BLOCK)
                self._cursor = 0
            take = min(count, self._buffer.size - self._cursor)
            parts.append(self._buffer[self._cursor:self._cursor + take])
            self._cursor += take
            count -= take
        return np.concatenate(parts) if parts else np.empty(0)

    def _draw_index(self, cdf: np.ndarray) -> int:
        index = int(np.searchsorted(cdf, self._uniform(), side="right"))
        return min(index, self.chain.n_states - 1)

    def _run_length(self, x: int) -> int:
        log_stay = self._log_stay[x]
        if log_stay == -math.inf:
            return 1
        return 1 + int(math.log(1.0 - self._uniform()) / log_stay)

    def _jump(self, x: int) -> int:
        cdf = self._jump_cdf[x]
        return min(bisect.bisect_right(cdf, self._uniform()), len(cdf) - 1)

    def next_states(self, length: int) -> np.ndarray:
        """Indices of the next `length` states, starting with the current one."""
        if length < 1:
            raise ValueError("length must be at least 1")
        n = self.chain.n_states
        if n == 1:
            return np.zeros(length, dtype=np.int64)

        if self._iid_cdf is not None:
            out = np.empty(length, dtype=np.int64)
            out[0] = self.state
            if length > 1:
                draws = np.searchsorted(self._iid_cdf, self._uniforms(length), side="right")
                out[1:] = np.minimum(draws[:-1], n - 1)
                self.state = int(min(draws[-1], n - 1))
            else:
                self.state = self._draw_index(self._iid_cdf)
            return out

        out = np.empty(length, dtype=np.int64)
        pos = 0
        while pos < length:
            if self._remaining == 0:
                self.state = self._jump(self.state)
                self._remaining = self._run_length(self.state)
            take = min(self._remaining, length - pos)
            out[pos:pos + take] = self.state
            pos += take
            self._remaining -= take
        return out

    def next_emissions(self, length: int) -> np.ndarray:
        """Arrivals f(X^t) for the next `length` slots."""
        return self.chain.emission[self.next_states(length)]


def sample_path(
    chain: FiniteMarkovChain,
    length: int,
    seed: SeedLike = None,
    initial_state: Optional[Hashable] = None,
    initial_distribution: Optional[Sequence[float]] = None,
    return_states: bool = False,
) -> Union[np.ndarray, Tuple[np.ndarray, np.ndarray]]:
    """
    Sample f(X^0), ..., f(X^{length-1}).

    Args:
        chain: A valid chain
        length: Number of slots
        seed: Seed or generator; equal seeds give equal paths
        initial_state: Label of X^0
        initial_distribution: Law of X^0 when no state is given (default pi)
        return_states: Also return the state indices

    Returns:
        np.ndarray: Emission sequence, optionally with the state indices

    Raises:
        UnknownState: If `initial_state` is not a label of the chain
    """
    sampler = ChainSampler(chain, seed, initial_state=initial_state, initial_distribution=initial_distribution)
    states = sampler.next_states(length)
    emissions = chain.emission[states]
    if return_states:
        return emissions, states
    return emissions


@dataclass(frozen=True)
class VarianceRateEstimate:
    """Replication estimate of Var(sum of m arrivals) / m."""

    value: float
    std_error: float
    window: int
    replications: int


def empirical_variance_rate(
    chain: FiniteMarkovChain,
    m: int,
    replications: int,
    seed: SeedLike = None,
) -> VarianceRateEstimate:
    """
    Estimate Var(sum_{t=1..m} f(X^t) | X^0 ~ pi) / m over independent replications.

    All replications advance together, one vectorised step per slot.
    """
    if m < 1 or replications < 2:
        raise ValueError("Need m >= 1 and at least 2 replications")
    rng = make_rng(seed)
    n = chain.n_states
    cdf = np.cumsum(chain.transition, axis=1)
    pi_cdf = np.cumsum(stationary_distribution(chain).probabilities)

    states = np.minimum(np.searchsorted(pi_cdf, rng.random(replications), side="right"), n - 1)
    totals = np.zeros(replications, dtype=np.int64)
    for _ in range(m):
        u = rng.random(replications)
        states = np.minimum((u[:, np.newaxis] >= cdf[states]).sum(axis=1), n - 1)
        totals += chain.emission[states]

    variance = float(np.var(totals, ddof=1)) / m
    std_error = variance * math.sqrt(2.0 / (replications - 1))
    return VarianceRateEstimate(value=variance, std_error=std_error, window=m, replications=replications)
