"""
Confidence intervals for steady-state simulation output.

Batch means: one long autocorrelated run is cut into non-overlapping
batches whose means are treated as approximately independent. Samples are
accumulated chunk by chunk so a run never has to be held in memory.
"""

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.stats import t

DEFAULT_BATCHES = 30
DEFAULT_CONFIDENCE = 0.95


@dataclass(frozen=True)
class Estimate:
    """Point estimate with its standard error and CI half-width."""

    mean: float
    std_error: float
    half_width: float


def confidence_interval(data: Sequence[float], confidence: float = DEFAULT_CONFIDENCE) -> Tuple[float, float]:
    """
    Mean and Student-t half-width of independent observations.

    Returns NaN as half-width when fewer than two observations are given.
    """
    values = np.asarray(data, dtype=np.float64).ravel()
    n = values.size
    mean = float(np.mean(values)) if n > 0 else math.nan
    if n < 2:
        return mean, math.nan
    s = float(np.std(values, ddof=1))
    tcrit = float(t.ppf(1.0 - (1.0 - confidence) / 2.0, df=n - 1))
    return mean, tcrit * s / math.sqrt(n)


class BatchMeans:
    """
    Streaming batch-means accumulator for one or more output series.

    Sample k of a run of `total` samples falls in batch min(k // size, n_batches - 1).
    """

    def __init__(
        self,
        total: int,
        n_series: int = 1,
        n_batches: int = DEFAULT_BATCHES,
        confidence: float = DEFAULT_CONFIDENCE,
    ):
        if n_batches < 2:
            raise ValueError("Need at least 2 batches")
        if total < n_batches:
            raise ValueError(f"Run of {total} samples is too short for {n_batches} batches")
        self.total = total
        self.n_batches = n_batches
        self.confidence = confidence
        self.batch_size = total // n_batches
        self._sums = np.zeros((n_series, n_batches), dtype=np.float64)
        self._counts = np.zeros(n_batches, dtype=np.int64)
        self._seen = 0

    def add(self, values: np.ndarray) -> None:
        """
        Add the next samples.

        Args:
            values: Shape (n_series, k) or (k,) for a single series
        """
        block = np.atleast_2d(np.asarray(values, dtype=np.float64))
        k = block.shape[1]
        if self._seen + k > self.total:
            raise ValueError("More samples than announced")
        positions = np.arange(self._seen, self._seen + k)
        batch = np.minimum(positions // self.batch_size, self.n_batches - 1)
        counts = np.bincount(batch, minlength=self.n_batches)
        for row in range(block.shape[0]):
            self._sums[row] += np.bincount(batch, weights=block[row], minlength=self.n_batches)
        self._counts += counts
        self._seen += k

    def batch_means(self) -> np.ndarray:
        return self._sums / np.maximum(self._counts, 1)

    def estimate(self, series: int = 0) -> Estimate:
        means = self.batch_means()[series]
        mean = float(np.sum(self._sums[series]) / max(self._seen, 1))
        s = float(np.std(means, ddof=1))
        std_error = s / math.sqrt(self.n_batches)
        tcrit = float(t.ppf(1.0 - (1.0 - self.confidence) / 2.0, df=self.n_batches - 1))
        return Estimate(mean=mean, std_error=std_error, half_width=tcrit * std_error)

    def quarter_means(self, series: int = 0) -> Tuple[float, ...]:
        """Means over the four quarters of the batches seen so far."""
        sums = self._sums[series]
        groups = np.array_split(np.arange(self.n_batches), 4)
        return tuple(float(sums[g].sum() / max(self._counts[g].sum(), 1)) for g in groups)
