"""
Finite-state Markov chains driving the arrival processes.
Provides validated construction, stationary analysis and JSON chain files.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Hashable, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from src.errors import IoError, NonStochasticRow, Periodic, Reducible, SolverFailure, UnknownState

ROW_SUM_TOL = 1e-12
STATIONARY_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class FiniteMarkovChain:
    """
    Irreducible, aperiodic chain X^t with integer emissions f(X^t).

    Instances come from `build_chain` and are immutable: the arrays are
    flagged read-only.
    """

    states: Tuple[Hashable, ...]
    transition: np.ndarray
    emission: np.ndarray

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def a_max(self) -> int:
        """Largest number of arrivals in one slot."""
        return int(self.emission.max())

    @property
    def is_iid(self) -> bool:
        """True when every row of P is the same distribution."""
        return bool(np.all(self.transition == self.transition[0]))

    def index_of(self, state: Hashable) -> int:
        """
        Position of a state label.

        Raises:
            UnknownState: If the label is not part of the chain
        """
        try:
            return self.states.index(state)
        except ValueError:
            raise UnknownState(state) from None


@dataclass(frozen=True, eq=False)
class StationaryDistribution:
    """Stationary law π of a chain and the mean emission λ = E_π[f]."""

    probabilities: np.ndarray
    mean_emission: float


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _period(adjacency: csr_matrix) -> int:
    levels = shortest_path(adjacency, unweighted=True, indices=0)
    rows, cols = adjacency.nonzero()
    diffs = levels[rows] + 1 - levels[cols]
    return int(np.gcd.reduce(np.abs(diffs).astype(np.int64)))


def build_chain(
    states: Sequence[Hashable],
    transition: Union[Sequence[Sequence[float]], np.ndarray],
    emission: Sequence[int],
) -> FiniteMarkovChain:
    """
    Validate and build a chain.

    Args:
        states: Ordered state labels
        transition: Row-stochastic matrix, P[x][y] = Pr(next=y | current=x)
        emission: Non-negative integer arrivals per state

    Returns:
        FiniteMarkovChain: The validated chain

    Raises:
        ValueError: If shapes do not match or emissions are not non-negative integers
        NonStochasticRow: If a row has a negative entry or does not sum to 1
        Reducible: If some state is not mutually reachable with the first one
        Periodic: If the chain has period > 1
    """
    labels = tuple(states)
    matrix = np.array(transition, dtype=np.float64)
    n = len(labels)
    if n == 0:
        raise ValueError("A chain needs at least one state")
    if len(set(labels)) != n:
        raise ValueError("State labels must be unique")
    if matrix.shape != (n, n):
        raise ValueError(f"Transition matrix shape {matrix.shape} does not match {n} states")

    raw_emission = np.asarray(emission)
    if raw_emission.shape != (n,):
        raise ValueError(f"Emission has shape {raw_emission.shape}, expected ({n},)")
    if not np.all(np.equal(np.mod(raw_emission, 1), 0)) or np.any(raw_emission < 0):
        raise ValueError("Emission values must be non-negative integers")
    values = raw_emission.astype(np.int64)

    for row in range(n):
        row_sum = float(matrix[row].sum())
        if np.any(matrix[row] < 0) or abs(row_sum - 1.0) > ROW_SUM_TOL:
            raise NonStochasticRow(row, row_sum)

    adjacency = csr_matrix(matrix > 0)
    _, components = connected_components(adjacency, directed=True, connection="strong")
    if np.any(components != components[0]):
        offender = int(np.flatnonzero(components != components[0])[0])
        raise Reducible(labels[offender])

    period = _period(adjacency)
    if period > 1:
        raise Periodic(labels[0], period)

    return FiniteMarkovChain(states=labels, transition=_readonly(matrix), emission=_readonly(values))


def stationary_distribution(chain: FiniteMarkovChain) -> StationaryDistribution:
    """
    Solve πP = π, Σπ = 1.

    Returns:
        StationaryDistribution: π and λ = Σ_x π(x) f(x)

    Raises:
        SolverFailure: If the solution misses the residual tolerance
    """
    n = chain.n_states
    if chain.is_iid:
        pi = chain.transition[0].copy()
    else:
        system = np.vstack([chain.transition.T - np.eye(n), np.ones((1, n))])
        rhs = np.zeros(n + 1)
        rhs[-1] = 1.0
        try:
            pi, *_ = np.linalg.lstsq(system, rhs, rcond=None)
        except np.linalg.LinAlgError as e:
            logger.error(f"Stationary solve failed: {e}")
            raise SolverFailure(f"Stationary solve failed: {e}") from e
        pi = np.where(np.abs(pi) < 1e-15, 0.0, pi)
        pi = pi / pi.sum()

    residual = float(np.max(np.abs(pi @ chain.transition - pi)))
    if np.any(pi < 0) or residual > STATIONARY_RESIDUAL_TOL:
        logger.error(f"Stationary distribution residual {residual:.3e} above tolerance")
        raise SolverFailure(f"Stationary residual {residual:.3e} exceeds {STATIONARY_RESIDUAL_TOL}")

    mean = float(pi @ chain.emission)
    return StationaryDistribution(probabilities=_readonly(pi), mean_emission=mean)


def chain_to_dict(chain: FiniteMarkovChain) -> Dict[str, Any]:
    """Serialise a chain to the JSON chain-file layout."""
    return {
        "states": list(chain.states),
        "transition": chain.transition.tolist(),
        "emission": chain.emission.tolist(),
    }


def load_chain(path: Union[str, Path]) -> FiniteMarkovChain:
    """
    Load a chain definition file.

    Args:
        path: JSON file with "states", "transition" and "emission" keys

    Returns:
        FiniteMarkovChain: The validated chain

    Raises:
        IoError: If the file cannot be read, parsed or does not describe a chain
        NonStochasticRow, Reducible, Periodic: If the chain itself is invalid
    """
    try:
        with open(path, "r") as handle:
            document = json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Failed to read chain file {path}: {e}")
        raise IoError(f"Failed to read chain file {path}: {e}") from e

    if not isinstance(document, dict):
        raise IoError(f"Chain file {path} must hold a JSON object")
    missing = [key for key in ("states", "transition", "emission") if key not in document]
    if missing:
        raise IoError(f"Chain file {path} is missing keys: {', '.join(missing)}")

    try:
        states = [tuple(s) if isinstance(s, list) else s for s in document["states"]]
        chain = build_chain(states, document["transition"], document["emission"])
    except (ValueError, TypeError) as e:
        logger.error(f"Invalid chain in {path}: {e}")
        raise IoError(f"Invalid chain in {path}: {e}") from e
    logger.info(f"Loaded chain with {chain.n_states} states from {path}")
    return chain
