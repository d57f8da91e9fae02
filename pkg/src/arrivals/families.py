"""
Heavy-traffic families of Markov-modulated arrival processes.

A family fixes the state space and emission levels and moves only the
transition probabilities with the heavy-traffic parameter epsilon. Scalar
families (single-server queue) have rate v - epsilon; matrix families
(switch) have rate (1 - epsilon) * v, one independent chain per queue.
"""

import operator
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from cachetools import LRUCache, cachedmethod
from loguru import logger

from src.errors import InfeasibleRate
from src.markov.autocov import autocovariance
from src.markov.chain import FiniteMarkovChain, build_chain
from src.markov.mixing import MixingEnvelope, envelope_for

Index = Tuple[int, ...]
ChainBuilder = Callable[[float, float], FiniteMarkovChain]

ON_OFF_STATES = ("OFF", "ON")


@dataclass(frozen=True, eq=False)
class ArrivalFamily:
    """
    Epsilon-indexed arrival processes sharing emission levels.

    Attributes:
        kind: "two_state" or "iid"
        target_rate: 0-d array (scalar v) or N x N doubly-stochastic matrix
        burstiness: Decay rate r of the autocorrelation, broadcast to the target shape
        emission_levels: Integer values f can take
        peak: A_max of every chain in the family
        builder: Maps (rate, r) to a chain with that stationary mean
    """

    kind: str
    target_rate: np.ndarray
    burstiness: np.ndarray
    emission_levels: Tuple[int, ...]
    peak: int
    builder: Callable[[float, float], FiniteMarkovChain] = field(repr=False)
    _cache: LRUCache = field(default_factory=lambda: LRUCache(maxsize=4096), repr=False)

    @property
    def is_matrix(self) -> bool:
        return self.target_rate.ndim == 2

    @property
    def n(self) -> int:
        """Switch size, 1 for a scalar family."""
        return self.target_rate.shape[0] if self.is_matrix else 1

    def indices(self) -> List[Index]:
        if not self.is_matrix:
            return [()]
        return [(i, j) for i in range(self.n) for j in range(self.n)]

    def rate(self, eps: float) -> Union[float, np.ndarray]:
        """Arrival rate lambda^(eps): v - eps for scalars, (1 - eps) v for matrices."""
        if self.is_matrix:
            return (1.0 - eps) * self.target_rate
        return float(self.target_rate) - eps

    @cachedmethod(operator.attrgetter("_cache"))
    def chain(self, eps: float, index: Index = ()) -> FiniteMarkovChain:
        """
        Chain for one queue at heavy-traffic parameter eps.

        Raises:
            InfeasibleRate: If the rate cannot be produced with the fixed emission levels
        """
        rate = self.rate(eps)
        value = float(rate[index]) if self.is_matrix else float(rate)
        r = float(self.burstiness[index]) if self.burstiness.ndim else float(self.burstiness)
        return self.builder(value, r)

    def chains(self, eps: float) -> Dict[Index, FiniteMarkovChain]:
        return {index: self.chain(eps, index) for index in self.indices()}

    def sigma_sq(self, eps: float) -> Union[float, np.ndarray]:
        """Asymptotic variance sigma^2 of each queue's arrivals at eps."""
        if not self.is_matrix:
            return autocovariance(self.chain(eps), t_max=0).sigma_sq
        out = np.empty_like(self.target_rate, dtype=np.float64)
        for index in self.indices():
            out[index] = autocovariance(self.chain(eps, index), t_max=0).sigma_sq
        return out

    def limit_sigma_sq(self) -> Union[float, np.ndarray]:
        """sigma^2 in the heavy-traffic limit, i.e. of the chain built at eps = 0."""
        return self.sigma_sq(0.0)

    def envelope(self, eps: float, index: Index = (), horizon: int = 100) -> MixingEnvelope:
        return envelope_for(self.chain(eps, index), horizon)


def _broadcast(value: Union[float, Sequence, np.ndarray], shape: Tuple[int, ...]) -> np.ndarray:
    array = np.asarray(value, dtype=np.float64)
    if array.ndim == 0:
        return array if not shape else np.full(shape, float(array))
    if array.shape != shape:
        raise ValueError(f"Expected shape {shape}, got {array.shape}")
    return array


def _two_state_builder(peak: int) -> ChainBuilder:
    def build(rate: float, r: float) -> FiniteMarkovChain:
        on_fraction = rate / peak
        if not 0.0 < on_fraction < 1.0:
            raise InfeasibleRate(f"ON fraction {on_fraction!r} for rate {rate!r} and peak {peak} is outside (0, 1)")
        if r == 0.0:
            row = [1.0 - on_fraction, on_fraction]
            return build_chain(ON_OFF_STATES, [row, row], [0, peak])
        p = (1.0 - r) * on_fraction
        q = (1.0 - r) * (1.0 - on_fraction)
        return build_chain(ON_OFF_STATES, [[1.0 - p, p], [q, 1.0 - q]], [0, peak])

    return build


def make_two_state_family(
    peak: int,
    burstiness: Union[float, Sequence, np.ndarray],
    target: Union[float, Sequence, np.ndarray],
) -> ArrivalFamily:
    """
    ON/OFF family with emissions (0, peak) and second eigenvalue r.

    OFF->ON has probability (1 - r) pi_ON and ON->OFF (1 - r)(1 - pi_ON), so
    pi_ON = rate / peak and gamma(t) = gamma(0) r^t for every epsilon.

    Args:
        peak: Arrivals in the ON state (k)
        burstiness: r in [0, 1), scalar or per queue
        target: v, scalar or N x N matrix

    Raises:
        ValueError: If r is outside [0, 1) or v outside (0, peak)
    """
    if peak < 1:
        raise ValueError("peak must be a positive integer")
    target_rate = np.asarray(target, dtype=np.float64)
    r = _broadcast(burstiness, target_rate.shape)
    if np.any(r < 0) or np.any(r >= 1):
        raise ValueError("burstiness must lie in [0, 1)")
    if np.any(target_rate <= 0) or np.any(target_rate >= peak):
        raise ValueError(f"target must lie in (0, {peak})")
    family = ArrivalFamily(
        kind="two_state",
        target_rate=target_rate,
        burstiness=r,
        emission_levels=(0, int(peak)),
        peak=int(peak),
        builder=_two_state_builder(int(peak)),
    )
    logger.debug(f"Built two-state family peak={peak}, shape={target_rate.shape}")
    return family


def _iid_builder(values: np.ndarray, probabilities: np.ndarray) -> ChainBuilder:
    base_mean = float(values @ probabilities)

    def build(rate: float, r: float) -> FiniteMarkovChain:
        if rate < 0 or rate > base_mean + 1e-12:
            raise InfeasibleRate(f"Rate {rate!r} is not reachable by thinning a distribution with mean {base_mean!r}")
        scale = min(rate / base_mean, 1.0)
        mixed: Dict[int, float] = {}
        for value, prob in zip(values.tolist(), probabilities.tolist()):
            mixed[value] = mixed.get(value, 0.0) + scale * prob
        mixed[0] = mixed.get(0, 0.0) + (1.0 - scale)
        support = sorted(v for v, p in mixed.items() if p > 0)
        row = np.array([mixed[v] for v in support])
        row = row / row.sum()
        return build_chain(tuple(support), np.tile(row, (len(support), 1)), support)

    return build


def make_iid_family(
    probabilities: Mapping[int, float],
    target: Union[float, Sequence, np.ndarray],
) -> ArrivalFamily:
    """
    I.i.d. family: per-slot arrivals drawn from a fixed distribution thinned
    by an extra zero-arrival mass to hit the rate.

    Args:
        probabilities: Distribution over non-negative integer arrival counts
        target: v, scalar or matrix; its entries may not exceed the distribution mean

    Raises:
        InfeasibleRate: If the target exceeds the mean of the distribution
    """
    values = np.array(sorted(probabilities), dtype=np.int64)
    probs = np.array([probabilities[v] for v in sorted(probabilities)], dtype=np.float64)
    if np.any(values < 0) or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
        raise ValueError("probabilities must be a distribution over non-negative integers")
    mean = float(values @ probs)
    target_rate = np.asarray(target, dtype=np.float64)
    if np.any(target_rate <= 0) or np.any(target_rate > mean + 1e-12):
        raise InfeasibleRate(f"Target {target!r} is not in (0, {mean!r}]")
    levels = tuple(sorted(set(values.tolist()) | {0}))
    return ArrivalFamily(
        kind="iid",
        target_rate=target_rate,
        burstiness=np.zeros_like(target_rate),
        emission_levels=levels,
        peak=int(values[probs > 0].max()),
        builder=_iid_builder(values, probs),
    )


@dataclass(frozen=True)
class UniformityReport:
    """Fitted mixing constants across an epsilon grid."""

    epsilons: Tuple[float, ...]
    alphas: Tuple[float, ...]
    c_consts: Tuple[float, ...]
    exact: Tuple[bool, ...]

    @property
    def alpha_spread(self) -> float:
        fitted = [a for a, e in zip(self.alphas, self.exact) if not e]
        return max(fitted) - min(fitted) if fitted else 0.0

    def within(self, alpha_cap: float, c_cap: float) -> bool:
        return all(e or (a <= alpha_cap and c <= c_cap) for a, c, e in zip(self.alphas, self.c_consts, self.exact))


def mixing_uniformity(
    family: ArrivalFamily,
    epsilons: Iterable[float],
    index: Optional[Index] = None,
) -> UniformityReport:
    """
    Fit (C, alpha) of one queue's chain at every epsilon of a grid.

    For a matrix family the worst queue is reported per epsilon unless an
    index is given.
    """
    eps_list = tuple(float(e) for e in epsilons)
    alphas, cs, exact = [], [], []
    for eps in eps_list:
        targets = [index] if index is not None else family.indices()
        envelopes = [family.envelope(eps, idx) for idx in targets]
        worst = max(envelopes, key=lambda env: (not env.exact_mixing, env.alpha, env.c_const))
        alphas.append(worst.alpha)
        cs.append(max(env.c_const for env in envelopes))
        exact.append(all(env.exact_mixing for env in envelopes))
    return UniformityReport(epsilons=eps_list, alphas=tuple(alphas), c_consts=tuple(cs), exact=tuple(exact))
