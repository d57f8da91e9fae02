"""
Experiment configuration: JSON documents validated by pydantic models.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config.settings import settings
from src.arrivals.families import ArrivalFamily, make_iid_family, make_two_state_family
from src.arrivals.rates import saturated_rate_matrix
from src.errors import ConfigInvalid, HeavyTrafficError, IoError
from src.ssq.queue import DEFAULT_THETAS, ServiceDistribution, default_burn_in
from src.stats.batch_means import DEFAULT_BATCHES, DEFAULT_CONFIDENCE
from src.switch.geometry import CapacityPosition, capacity_position

DEFAULT_EPSILONS = (0.2, 0.1, 0.05, 0.02, 0.01)


class FamilySpec(BaseModel):
    """Arrival family: ON/OFF two-state chains or i.i.d. thinned counts."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["two_state", "iid"] = "two_state"
    peak: int = Field(2, ge=1)
    burstiness: Union[float, List[List[float]]] = 0.4
    distribution: Dict[int, float] = Field(default_factory=lambda: {1: 1.0})
    target: Optional[float] = None


class ServiceSpec(BaseModel):
    """Finite-support service distribution, Bernoulli(0.5) by default."""

    model_config = ConfigDict(extra="forbid")

    distribution: Dict[int, float] = Field(default_factory=lambda: {0: 0.5, 1: 0.5})

    @field_validator("distribution")
    @classmethod
    def validate_distribution(cls, v):
        try:
            ServiceDistribution.from_mapping(v)
        except ValueError as exc:
            raise ValueError(str(exc))
        return v

    def build(self) -> ServiceDistribution:
        return ServiceDistribution.from_mapping(self.distribution)


class RateMatrixSpec(BaseModel):
    """Saturated target rate matrix v of the switch."""

    model_config = ConfigDict(extra="forbid")

    preset: Literal["uniform", "random", "custom"] = "uniform"
    seed: Optional[int] = None
    matrix: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def check_matrix(self):
        if self.preset == "custom":
            if self.matrix is None:
                raise ValueError("a custom preset needs a matrix")
            if capacity_position(self.matrix) != CapacityPosition.ON_FACE_F:
                raise ValueError("matrix must have unit row and column sums")
        elif self.matrix is not None:
            raise ValueError(f"matrix is only allowed with the custom preset, not {self.preset!r}")
        return self


class ExperimentConfig(BaseModel):
    """One heavy-traffic sweep over a decreasing epsilon grid."""

    model_config = ConfigDict(extra="forbid")

    model: Literal["ssq", "switch"]
    family: FamilySpec = Field(default_factory=FamilySpec)
    service: ServiceSpec = Field(default_factory=ServiceSpec)
    rates: RateMatrixSpec = Field(default_factory=RateMatrixSpec)
    n: int = Field(2, ge=2)
    epsilons: List[float] = Field(default_factory=lambda: list(DEFAULT_EPSILONS), min_length=1)
    horizon: int = Field(2_000_000, ge=1)
    burn_in: Optional[int] = Field(None, ge=0)
    replications: int = Field(1, ge=1)
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED, ge=0)
    thetas: List[float] = Field(default_factory=lambda: list(DEFAULT_THETAS))
    output: Optional[str] = None
    n_batches: int = Field(DEFAULT_BATCHES, ge=2)
    confidence: float = Field(DEFAULT_CONFIDENCE, gt=0.0, lt=1.0)
    metric_stride: int = Field(8, ge=1)
    alpha_cap: float = Field(0.99, gt=0.0, lt=1.0)
    c_cap: float = Field(100.0, gt=0.0)
    check_identities: bool = True
    threads: Optional[int] = Field(None, ge=1)

    @field_validator("thetas")
    @classmethod
    def validate_thetas(cls, v):
        if any(theta > 0 for theta in v):
            raise ValueError("MGF arguments must be <= 0")
        return v

    @model_validator(mode="after")
    def check_grid(self):
        if any(b >= a for a, b in zip(self.epsilons, self.epsilons[1:])):
            raise ValueError("epsilons must be strictly decreasing")
        ceiling = min(self.service_mean, 1.0) if self.model == "ssq" else 1.0
        if any(not 0.0 < eps < ceiling for eps in self.epsilons):
            raise ValueError(f"epsilons must lie in (0, {ceiling!r})")
        if self.model == "ssq" and self.family.target is not None and abs(self.family.target - self.service_mean) > 1e-12:
            raise ValueError(f"family target {self.family.target!r} must equal the service mean {self.service_mean!r}")
        needed = self.n_batches * (self.metric_stride if self.model == "switch" else 1)
        for eps in self.epsilons:
            burn = self.burn_in if self.burn_in is not None else default_burn_in(eps)
            if self.horizon - burn < needed:
                raise ValueError(f"horizon {self.horizon} leaves fewer than {needed} recorded slots after burn-in {burn} at eps={eps}")
        return self

    @property
    def service_mean(self) -> float:
        return self.service.build().mean


def _format_errors(error: ValidationError) -> List[str]:
    messages = []
    for item in error.errors():
        path = ".".join(str(part) for part in item["loc"]) or "<root>"
        messages.append(f"{path}: {item['msg']}")
    return messages


def parse_config(data: Dict[str, Any]) -> ExperimentConfig:
    """
    Validate a configuration document.

    Raises:
        ConfigInvalid: With one `field.path: message` line per problem
    """
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        messages = _format_errors(exc)
        logger.error(f"Invalid configuration: {'; '.join(messages)}")
        raise ConfigInvalid(messages)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Read and validate a JSON configuration file.

    Raises:
        IoError: If the file cannot be read
        ConfigInvalid: If it is not valid JSON or fails validation
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        logger.error(f"Cannot read configuration {path}: {exc}")
        raise IoError(f"Cannot read configuration {path}: {exc}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid([f"<root>: not valid JSON ({exc.msg} at line {exc.lineno})"])
    if not isinstance(data, dict):
        raise ConfigInvalid(["<root>: expected a JSON object"])
    return parse_config(data)


def default_config(model: str) -> Dict[str, Any]:
    """Every field with its default, as printed by --print-config."""
    return ExperimentConfig(model=model).model_dump(mode="json")


def target_matrix(config: ExperimentConfig) -> np.ndarray:
    """Saturated rate matrix v of a switch experiment."""
    spec = config.rates
    if spec.preset == "custom":
        v = np.asarray(spec.matrix, dtype=np.float64)
        if v.shape != (config.n, config.n):
            raise ConfigInvalid([f"rates.matrix: shape {v.shape} does not match n={config.n}"])
        return v
    seed = spec.seed if spec.seed is not None else config.seed
    return saturated_rate_matrix(config.n, seed=seed, preset=spec.preset)


def build_family(config: ExperimentConfig) -> ArrivalFamily:
    """
    Arrival family of an experiment: scalar with v = mu for ssq, matrix with v for the switch.

    Raises:
        ConfigInvalid: If the family cannot produce the requested rates
    """
    spec = config.family
    target: Union[float, np.ndarray] = config.service_mean if config.model == "ssq" else target_matrix(config)
    try:
        if spec.kind == "iid":
            return make_iid_family(spec.distribution, target)
        burstiness = spec.burstiness
        if config.model == "ssq" and not isinstance(burstiness, (int, float)):
            raise ConfigInvalid(["family.burstiness: single-server families take a scalar"])
        return make_two_state_family(spec.peak, burstiness, target)
    except (ValueError, HeavyTrafficError) as exc:
        if isinstance(exc, ConfigInvalid):
            raise
        raise ConfigInvalid([f"family: {exc}"])
