"""
Exception hierarchy for the heavy-traffic toolkit.
Every error names the offending row, state, field or quantity, and errors
with structured fields rebuild from them when unpickled.
"""

from typing import Any, List, Optional


class HeavyTrafficError(Exception):
    """Base class for all toolkit errors."""


class NonStochasticRow(HeavyTrafficError):
    """A transition row has a negative entry or does not sum to one."""

    def __init__(self, row: int, row_sum: float):
        self.row = row
        self.row_sum = row_sum
        super().__init__(f"Row {row} is not stochastic (sum={row_sum!r})")

    def __reduce__(self):
        return type(self), (self.row, self.row_sum)


class Reducible(HeavyTrafficError):
    """The positive-entry graph of the chain is not strongly connected."""

    def __init__(self, state: Any):
        self.state = state
        super().__init__(f"Chain is reducible: state {state!r} is not mutually reachable with the first state")

    def __reduce__(self):
        return type(self), (self.state,)


class Periodic(HeavyTrafficError):
    """The chain has period greater than one."""

    def __init__(self, state: Any, period: int):
        self.state = state
        self.period = period
        super().__init__(f"Chain is periodic: state {state!r} has period {period}")

    def __reduce__(self):
        return type(self), (self.state, self.period)


class SolverFailure(HeavyTrafficError):
    """A linear solve could not meet its residual tolerance."""


class EnvelopeInfeasible(HeavyTrafficError):
    """No geometric envelope with alpha < 1 dominates the mixing profile."""


class UnknownState(HeavyTrafficError):
    """A state label is not part of the chain."""

    def __init__(self, state: Any):
        self.state = state
        super().__init__(f"Unknown state {state!r}")

    def __reduce__(self):
        return type(self), (self.state,)


class InfeasibleRate(HeavyTrafficError):
    """A requested arrival rate cannot be realised by the family."""


class VacuousBound(HeavyTrafficError):
    """The pre-limit upper bound has a non-positive denominator."""


class DimensionTooLarge(HeavyTrafficError):
    """Exhaustive enumeration was requested for too large a switch."""

    def __init__(self, n: int, limit: int):
        self.n = n
        self.limit = limit
        super().__init__(f"Dimension {n} exceeds enumeration limit {limit}")

    def __reduce__(self):
        return type(self), (self.n, self.limit)


class ConvergenceFailure(HeavyTrafficError):
    """An iterative solver hit its iteration cap."""


class UnstableRun(HeavyTrafficError):
    """Queue lengths kept growing across the recorded horizon."""

    def __init__(self, quarter_means: List[float]):
        self.quarter_means = list(quarter_means)
        super().__init__(f"Queue length keeps growing over the run: quarter means {self.quarter_means}")

    def __reduce__(self):
        return type(self), (self.quarter_means,)


class InvariantViolation(HeavyTrafficError):
    """A per-slot or run-level identity failed."""

    def __init__(self, name: str, detail: Optional[str] = None):
        self.name = name
        self.detail = detail
        message = f"Invariant '{name}' violated"
        if detail:
            message += f": {detail}"
        super().__init__(message)

    def __reduce__(self):
        return type(self), (self.name, self.detail)


class ConfigInvalid(HeavyTrafficError):
    """An experiment configuration failed validation."""

    def __init__(self, messages: List[str]):
        self.messages = list(messages)
        super().__init__("Invalid configuration:\n" + "\n".join(f"  {m}" for m in self.messages))

    def __reduce__(self):
        return type(self), (self.messages,)


class IoError(HeavyTrafficError):
    """A configuration, chain or output file could not be read or written."""
