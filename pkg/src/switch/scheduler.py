"""
MaxWeight scheduling over perfect matchings of an N x N switch.
"""

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Set, Tuple, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from src.errors import DimensionTooLarge
from src.markov.sampling import SeedLike, make_rng

ENUMERATION_LIMIT = 5
BRUTE_FORCE_LIMIT = 8

Matcher = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class QueueMatrix:
    """N x N matrix of non-negative integer queue lengths."""

    entries: np.ndarray

    @classmethod
    def from_array(cls, values) -> "QueueMatrix":
        array = np.asarray(values)
        if array.ndim != 2 or array.shape[0] != array.shape[1]:
            raise ValueError(f"Queue matrix must be square, got shape {array.shape}")
        if np.any(array < 0) or not np.all(np.equal(np.mod(array, 1), 0)):
            raise ValueError("Queue lengths must be non-negative integers")
        return cls(entries=array.astype(np.int64))

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class Schedule:
    """Perfect matching: input i is connected to output permutation[i]."""

    permutation: Tuple[int, ...]

    def __post_init__(self):
        if sorted(self.permutation) != list(range(len(self.permutation))):
            raise ValueError(f"{self.permutation} is not a permutation")

    @property
    def n(self) -> int:
        return len(self.permutation)

    def matrix(self) -> np.ndarray:
        s = np.zeros((self.n, self.n), dtype=np.int64)
        s[np.arange(self.n), list(self.permutation)] = 1
        return s

    def weight(self, q) -> float:
        q = np.asarray(q)
        return float(q[np.arange(self.n), list(self.permutation)].sum())


def hungarian_match(weights: np.ndarray) -> np.ndarray:
    """Maximum-weight perfect matching (assignment) as a column index per row."""
    _, columns = linear_sum_assignment(weights, maximize=True)
    return columns


@lru_cache(maxsize=16)
def permutation_table(n: int) -> np.ndarray:
    """All N! permutations, one per row."""
    table = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    table.setflags(write=False)
    return table


class MaxWeightScheduler:
    """
    Picks argmax_s <q, s> over perfect matchings with uniform tie-breaking.

    The matcher finds an optimum. For N <= 5 every matching with the same
    weight is enumerated and one is drawn uniformly. Larger switches perturb
    the weights with random keys whose total over a matching stays below
    1/2, half the smallest gap between distinct integer weights, which
    breaks ties approximately uniformly.
    """

    def __init__(self, n: int, seed: SeedLike = None, matcher: Optional[Matcher] = None):
        self.n = n
        self.rng = make_rng(seed)
        self.matcher = matcher or hungarian_match
        self._rows = np.arange(n)
        self._table = permutation_table(n) if n <= ENUMERATION_LIMIT else None

    def choose(self, q: np.ndarray) -> np.ndarray:
        """Permutation array for queue lengths q (integer-valued)."""
        if self._table is None:
            keys = self.rng.random((self.n, self.n)) / (2.0 * self.n)
            return np.asarray(self.matcher(q + keys), dtype=np.int64)

        candidate = np.asarray(self.matcher(q), dtype=np.int64)
        best = q[self._rows, candidate].sum()
        weights = q[self._rows, self._table].sum(axis=1)
        ties = np.flatnonzero(weights == best)
        if ties.size == 0:
            return candidate
        if ties.size == 1:
            return self._table[ties[0]]
        return self._table[ties[self.rng.integers(ties.size)]]


def max_weight_schedule(
    q: Union[QueueMatrix, np.ndarray],
    rng: SeedLike = None,
    matcher: Optional[Matcher] = None,
) -> Schedule:
    """
    MaxWeight schedule for one slot.

    Args:
        q: Queue lengths
        rng: Generator or seed for tie-breaking
        matcher: Assignment solver, defaults to the Hungarian method

    Returns:
        Schedule: A maximum-weight perfect matching, uniform over the maximizers
    """
    matrix = q if isinstance(q, QueueMatrix) else QueueMatrix.from_array(q)
    scheduler = MaxWeightScheduler(matrix.n, rng, matcher)
    return Schedule(tuple(int(c) for c in scheduler.choose(matrix.entries)))


def brute_force_schedules(q) -> Set[Tuple[int, ...]]:
    """
    Every maximum-weight permutation, by enumeration.

    Raises:
        DimensionTooLarge: If N > 8
    """
    q = np.asarray(q)
    n = q.shape[0]
    if n > BRUTE_FORCE_LIMIT:
        raise DimensionTooLarge(n, BRUTE_FORCE_LIMIT)
    table = permutation_table(n)
    weights = q[np.arange(n), table].sum(axis=1)
    best = weights.max()
    return {tuple(int(c) for c in table[k]) for k in np.flatnonzero(weights == best)}
