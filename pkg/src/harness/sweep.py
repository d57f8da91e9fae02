"""
Epsilon sweeps: run every (epsilon, replication) job, aggregate per epsilon,
attach predictions and bounds, and write one CSV row per epsilon.
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from config.settings import settings
from src.arrivals.families import ArrivalFamily, mixing_uniformity
from src.errors import IoError
from src.harness.config import ExperimentConfig, build_family
from src.markov.autocov import autocovariance
from src.ssq.predictions import claim_window, heavy_traffic_mean, laplace_prediction, prelimit_bounds
from src.ssq.queue import SsqConfig, SsqStats, simulate_ssq
from src.stats.batch_means import confidence_interval
from src.switch.predictions import switch_prediction, universal_lower
from src.switch.simulate import SwitchStats, simulate_switch

EXTRAPOLATION_POINTS = 3

SSQ_COLUMNS = ("epsilon", "m_window", "mean_q", "scaled_mean_q", "ci", "lower_bound", "upper_bound",
               "prediction", "mean_unused")
SWITCH_COLUMNS = ("epsilon", "n", "scaled_sum_q", "ci", "prediction", "universal_lower", "perp_k_sq",
                  "perp_l_sq", "parallel_k_sq", "sum_unused")
TRAILING_COLUMNS = ("ratio", "seed", "slots")

Stats = Union[SsqStats, SwitchStats]


@dataclass(frozen=True)
class SweepRecord:
    """Aggregate over the replications at one epsilon."""

    epsilon: float
    estimate: float
    ci: float
    prediction: float
    seed: int
    slots: int
    values: Dict[str, float] = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        return self.estimate / self.prediction if self.prediction > 0 else math.nan

    def row(self, columns: Sequence[str]) -> Dict[str, float]:
        base = {"epsilon": self.epsilon, "ci": self.ci, "prediction": self.prediction,
                "ratio": self.ratio, "seed": self.seed, "slots": self.slots}
        base.update(self.values)
        return {column: base[column] for column in columns}


@dataclass(frozen=True)
class SweepResult:
    records: List[SweepRecord]
    columns: Tuple[str, ...]
    extrapolated_ratio: float
    monotone: bool

    def frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([r.row(self.columns) for r in self.records], columns=list(self.columns))
        return frame.replace([np.inf, -np.inf], np.nan)


def job_seed(root: int, eps_index: int, replication: int) -> int:
    """Independent seed of one (epsilon, replication) job."""
    return int(np.random.SeedSequence(root, spawn_key=(eps_index, replication)).generate_state(1)[0])


def _run_job(job: Tuple[ExperimentConfig, float, int]) -> Stats:
    config, eps, seed = job
    family = build_family(config)
    if config.model == "ssq":
        return simulate_ssq(SsqConfig(
            family=family,
            epsilon=eps,
            service=config.service.build(),
            horizon=config.horizon,
            burn_in=config.burn_in,
            seed=seed,
            n_batches=config.n_batches,
            confidence=config.confidence,
            thetas=tuple(config.thetas),
            check_identities=config.check_identities,
        ))
    return simulate_switch(
        family,
        eps,
        config.horizon,
        burn_in=config.burn_in,
        seed=seed,
        n_batches=config.n_batches,
        confidence=config.confidence,
        metric_stride=config.metric_stride,
        check_identities=config.check_identities,
    )


def worker_count(config: ExperimentConfig, jobs: int) -> int:
    """config.threads, else HTQ_THREADS, else the CPU count; never more than the jobs."""
    limit = config.threads or settings.THREADS or os.cpu_count() or 1
    return max(1, min(limit, jobs))


def run_jobs(config: ExperimentConfig) -> List[List[Stats]]:
    """Stats per epsilon, replications in order, independent of completion order."""
    jobs = [(config, eps, job_seed(config.seed, e, r))
            for e, eps in enumerate(config.epsilons) for r in range(config.replications)]
    workers = worker_count(config, len(jobs))
    logger.info(f"Running {len(jobs)} {config.model} jobs on {workers} worker(s)")
    if workers == 1:
        results = [_run_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_job, jobs))
    reps = config.replications
    return [results[e * reps:(e + 1) * reps] for e in range(len(config.epsilons))]


def _aggregate(values: Sequence[float], confidence: float) -> Tuple[float, float]:
    if len(values) == 1:
        return float(values[0]), math.nan
    mean, half_width = confidence_interval(values, confidence)
    return mean, half_width


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def widest_ci(ci: float, batch_ci: float) -> float:
    """Across-replication CI, or the within-run batch-means CI if that is wider or the only one."""
    return float(max(np.nan_to_num(ci), batch_ci))


def _ssq_record(config: ExperimentConfig, family: ArrivalFamily, eps: float, runs: List[SsqStats]) -> SweepRecord:
    service = config.service.build()
    sigma_a = float(family.limit_sigma_sq())
    prediction = heavy_traffic_mean(sigma_a, service.variance)
    estimate, ci = _aggregate([s.scaled_mean_q for s in runs], config.confidence)

    chain = family.chain(eps)
    m = claim_window(eps)
    summary = autocovariance(chain, t_max=m)
    bounds = prelimit_bounds(eps, m, summary.gamma[:m + 1], service.variance, chain.a_max, service.s_max,
                             float(family.rate(eps)), family.envelope(eps), allow_vacuous=True)
    if bounds.upper_vacuous:
        logger.warning(f"eps={eps}: upper bound is vacuous at m={m}")
    batch_ci = eps * max(s.ci_halfwidths["mean_q"] for s in runs)
    within = bool(bounds.contains(estimate, 2.0 * widest_ci(ci, batch_ci)))
    if not within:
        logger.warning(f"eps={eps}: scaled mean {estimate:.4f} outside [{bounds.lower:.4f}, {bounds.upper:.4f}]")

    values = {
        "m_window": m,
        "mean_q": _mean([s.mean_q for s in runs]),
        "scaled_mean_q": estimate,
        "lower_bound": bounds.lower,
        "upper_bound": bounds.upper,
        "mean_unused": _mean([s.mean_unused for s in runs]),
        "batch_ci": batch_ci,
        "within_bounds": within,
    }
    for theta in config.thetas:
        values[f"mgf_theta_{theta}"] = _mean([s.mgf_estimates[theta] for s in runs])
        values[f"laplace_pred_{theta}"] = laplace_prediction(theta, sigma_a, service.variance)
    return SweepRecord(epsilon=eps, estimate=estimate, ci=ci, prediction=prediction, seed=config.seed,
                       slots=sum(s.slots for s in runs), values=values)


def _switch_record(config: ExperimentConfig, family: ArrivalFamily, eps: float, runs: List[SwitchStats]) -> SweepRecord:
    sigma = family.limit_sigma_sq()
    prediction = switch_prediction(sigma, family.n)
    estimate, ci = _aggregate([s.scaled_sum_q for s in runs], config.confidence)
    values = {
        "n": family.n,
        "scaled_sum_q": estimate,
        "universal_lower": universal_lower(sigma),
        "perp_k_sq": _mean([s.perp_k_sq for s in runs]),
        "perp_l_sq": _mean([s.perp_l_sq for s in runs]),
        "parallel_k_sq": _mean([s.parallel_k_sq for s in runs]),
        "sum_unused": _mean([s.sum_unused for s in runs]),
        "batch_ci": eps * max(s.ci_halfwidths["sum_q"] for s in runs),
    }
    return SweepRecord(epsilon=eps, estimate=estimate, ci=ci, prediction=prediction, seed=config.seed,
                       slots=sum(s.slots for s in runs), values=values)


def extrapolate_ratio(records: Sequence[SweepRecord], points: int = EXTRAPOLATION_POINTS) -> float:
    """
    Ratio estimate/prediction extrapolated to eps = 0 by a line in sqrt(eps)
    through the smallest-eps records.
    """
    tail = sorted(records, key=lambda r: r.epsilon)[:points]
    if not tail:
        return math.nan
    if len(tail) == 1:
        return tail[0].ratio
    x = np.sqrt([r.epsilon for r in tail])
    y = np.array([r.ratio for r in tail])
    _, intercept = np.polyfit(x, y, 1)
    return float(intercept)


def monotone_gaps(records: Sequence[SweepRecord]) -> bool:
    """
    |estimate - prediction| non-increasing along the grid up to CI overlap.
    """
    ok = True
    for prev, cur in zip(records, records[1:]):
        slack = np.nan_to_num(prev.ci) + np.nan_to_num(cur.ci)
        if abs(cur.estimate - cur.prediction) > abs(prev.estimate - prev.prediction) + slack:
            logger.warning(f"Gap to prediction grew from eps={prev.epsilon} to eps={cur.epsilon}")
            ok = False
    return ok


def _check_uniformity(config: ExperimentConfig, family: ArrivalFamily) -> None:
    report = mixing_uniformity(family, config.epsilons)
    if not report.within(config.alpha_cap, config.c_cap):
        logger.warning(
            f"Mixing constants exceed caps (alpha <= {config.alpha_cap}, C <= {config.c_cap}): "
            f"alphas={report.alphas}, C={report.c_consts}"
        )


def run_sweep(config: ExperimentConfig, out: Optional[Union[str, Path]] = None) -> SweepResult:
    """
    Run a sweep and write its CSV.

    Args:
        config: Validated experiment configuration
        out: CSV path, default config.output; nothing is written when both are unset

    Returns:
        SweepResult: Records per epsilon with the extrapolated ratio

    Raises:
        ConfigInvalid: If the family or a run configuration is invalid
        IoError: If the CSV cannot be written
    """
    family = build_family(config)
    _check_uniformity(config, family)
    grouped = run_jobs(config)

    if config.model == "ssq":
        records = [_ssq_record(config, family, eps, runs) for eps, runs in zip(config.epsilons, grouped)]
        extra = tuple(f"{prefix}_{theta}" for theta in config.thetas for prefix in ("mgf_theta", "laplace_pred"))
        columns = SSQ_COLUMNS + extra + TRAILING_COLUMNS
    else:
        records = [_switch_record(config, family, eps, runs) for eps, runs in zip(config.epsilons, grouped)]
        columns = SWITCH_COLUMNS + TRAILING_COLUMNS

    result = SweepResult(records=records, columns=columns, extrapolated_ratio=extrapolate_ratio(records),
                         monotone=monotone_gaps(records))
    logger.info(f"{config.model} sweep done: extrapolated ratio {result.extrapolated_ratio:.4f}")

    path = out or config.output
    if path:
        write_csv(result.frame(), path)
    return result


def write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> None:
    """
    Raises:
        IoError: If the file cannot be written
    """
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, na_rep="NA", float_format="%.10g")
    except OSError as exc:
        logger.error(f"Cannot write {path}: {exc}")
        raise IoError(f"Cannot write {path}: {exc}")
    logger.info(f"Wrote {len(frame)} rows to {path}")
