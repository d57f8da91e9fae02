"""
Geometry of the switch capacity region near the saturated face F.

K is the cone spanned non-negatively by the row indicators e^(i) and the
column indicators e~^(j); L is their linear span. Queue matrices are
projected onto both to measure state-space collapse.
"""

import itertools
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional

import numpy as np
from loguru import logger
from scipy.optimize import nnls

from src.errors import ConvergenceFailure, DimensionTooLarge

FACE_TOL = 1e-10
BRUTE_FORCE_LIMIT = 4


class CapacityPosition(str, Enum):
    INTERIOR = "Interior"
    ON_FACE_F = "OnFaceF"
    BOUNDARY_OTHER = "Boundary-other"
    OUTSIDE = "Outside"


@dataclass(frozen=True, eq=False)
class ConeDecomposition:
    """x = parallel + perp with parallel the projection onto K and perp in the polar cone."""

    parallel: np.ndarray
    perp: np.ndarray
    weights: np.ndarray

    @property
    def row_weights(self) -> np.ndarray:
        n = self.parallel.shape[0]
        return self.weights[:n]

    @property
    def column_weights(self) -> np.ndarray:
        n = self.parallel.shape[0]
        return self.weights[n:]


def _square(x) -> np.ndarray:
    array = np.asarray(x, dtype=np.float64)
    if array.ndim != 2 or array.shape[0] != array.shape[1]:
        raise ValueError(f"Expected a square matrix, got shape {array.shape}")
    return array


@lru_cache(maxsize=64)
def generators(n: int) -> np.ndarray:
    """N^2 x 2N matrix whose columns are vec(e^(i)) followed by vec(e~^(j))."""
    g = np.zeros((n * n, 2 * n))
    for i in range(n):
        for j in range(n):
            g[i * n + j, i] = 1.0
            g[i * n + j, n + j] = 1.0
    g.setflags(write=False)
    return g


def project_L(x) -> np.ndarray:
    """(x_parallel_L)_ij = rowmean_i + colmean_j - grandmean."""
    x = _square(x)
    return x.mean(axis=1, keepdims=True) + x.mean(axis=0, keepdims=True) - x.mean()


def norm_parallel_L_sq(x) -> float:
    """||x_parallel_L||^2 = (1/N)(sum_j colsum_j^2 + sum_i rowsum_i^2 - grandsum^2 / N)."""
    x = _square(x)
    n = x.shape[0]
    rows = x.sum(axis=1)
    cols = x.sum(axis=0)
    total = x.sum()
    return float((np.dot(cols, cols) + np.dot(rows, rows) - total ** 2 / n) / n)


def project_K(x, max_iter: Optional[int] = None) -> ConeDecomposition:
    """
    Project onto K by non-negative least squares over the 2N generator weights.

    The generators are linearly dependent (sum_i e^(i) = sum_j e~^(j)), so
    the weights are one optimal choice among many; the projection itself is
    unique.

    Args:
        x: N x N real matrix
        max_iter: Iteration cap handed to the solver, default 100 N

    Raises:
        ConvergenceFailure: If the solver hits the iteration cap
    """
    x = _square(x)
    n = x.shape[0]
    g = generators(n)
    cap = max_iter if max_iter is not None else 100 * n
    try:
        weights, _ = nnls(g, x.ravel(), maxiter=cap)
    except RuntimeError as exc:
        logger.error(f"Cone projection hit iteration cap {cap} for N={n}: {exc}")
        raise ConvergenceFailure(f"Cone projection did not converge in {cap} iterations")
    parallel = (g @ weights).reshape(n, n)
    return ConeDecomposition(parallel=parallel, perp=x - parallel, weights=weights)


def brute_force_project_K(x) -> np.ndarray:
    """
    Projection onto K by checking the optimality conditions on every
    subset of generators; exponential, used as an oracle for N <= 4.

    Raises:
        DimensionTooLarge: If N > 4
    """
    x = _square(x)
    n = x.shape[0]
    if n > BRUTE_FORCE_LIMIT:
        raise DimensionTooLarge(n, BRUTE_FORCE_LIMIT)
    g = generators(n)
    target = x.ravel()
    tol = 1e-9 * max(1.0, float(np.linalg.norm(target)))
    best, best_residual = None, np.inf
    for size in range(2 * n + 1):
        for subset in itertools.combinations(range(2 * n), size):
            columns = list(subset)
            if columns:
                w, *_ = np.linalg.lstsq(g[:, columns], target, rcond=None)
                if np.any(w < -tol):
                    continue
                parallel = g[:, columns] @ w
            else:
                parallel = np.zeros_like(target)
            residual = target - parallel
            if np.any(g.T @ residual > tol):
                continue
            norm = float(np.linalg.norm(residual))
            if norm < best_residual:
                best, best_residual = parallel, norm
    return best.reshape(n, n)


def capacity_position(rates) -> CapacityPosition:
    """
    Locate an arrival-rate matrix relative to the capacity region.

    Interior: all port sums < 1. OnFaceF: all port sums = 1. Outside: some
    port sum > 1. Anything else lies on another part of the boundary.
    """
    rates = _square(rates)
    if np.any(rates < 0):
        raise ValueError("Rates must be non-negative")
    sums = np.concatenate([rates.sum(axis=1), rates.sum(axis=0)])
    if np.any(sums > 1.0 + FACE_TOL):
        return CapacityPosition.OUTSIDE
    if np.all(np.abs(sums - 1.0) <= FACE_TOL):
        return CapacityPosition.ON_FACE_F
    if np.all(sums < 1.0 - FACE_TOL):
        return CapacityPosition.INTERIOR
    return CapacityPosition.BOUNDARY_OTHER
