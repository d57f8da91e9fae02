"""
Named invariant checks over every module.

The fast level runs oracles and identities; the full level adds
desk-scale simulation checks. Each check either returns a short detail
string or raises; the report records the outcome per check. Full-level
checks share their sweeps through the context, so each sweep runs once.
"""

import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from loguru import logger
from scipy.stats import chisquare

from src.arrivals.families import make_iid_family, make_two_state_family
from src.arrivals.rates import min_rate, saturated_rate_matrix
from src.errors import HeavyTrafficError, InvariantViolation, NonStochasticRow, Periodic, Reducible
from src.harness.config import ExperimentConfig, parse_config
from src.harness.sweep import SweepRecord, SweepResult, run_sweep, widest_ci
from src.markov.autocov import autocovariance
from src.markov.chain import build_chain, stationary_distribution
from src.markov.mixing import SOUNDNESS_TOL, envelope_for, mixing_profile
from src.ssq.queue import ServiceDistribution, SsqConfig, lindley_chunk, simulate_ssq, ssq_step
from src.switch.geometry import brute_force_project_K, generators, norm_parallel_L_sq, project_K, project_L
from src.switch.predictions import optimality_ratio, switch_prediction, universal_lower
from src.switch.scheduler import Matcher, MaxWeightScheduler, brute_force_schedules, permutation_table
from src.switch.simulate import chains_for_rates, simulate_switch, switch_step, switch_sum_trace

LEVELS = ("fast", "full")

ACCEPTANCE_HORIZON = 20_000_000
SSQ_REPLICATIONS = 4
SWITCH_GRID = (0.1, 0.05, 0.02)
SWITCH_SIZES = (2, 3)
LIMIT_TOLERANCE = 0.15


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


@dataclass
class VerifyReport:
    level: str
    results: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> List[str]:
        return [r.name for r in self.results if not r.passed]

    def lines(self) -> List[str]:
        return [f"{'PASS' if r.passed else 'FAIL'}  {r.name:<32} {r.seconds:7.2f}s  {r.detail}" for r in self.results]


@dataclass
class VerifyContext:
    seed: int
    matcher: Optional[Matcher]
    current: str = ""
    sweeps: Dict[Any, Tuple[ExperimentConfig, SweepResult]] = field(default_factory=dict)

    def rng(self, salt: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(salt,)))

    def require(self, condition: bool, detail: str) -> None:
        """Fail the running check with `detail` unless `condition` holds."""
        if not condition:
            raise InvariantViolation(self.current, detail)

    def sweep(self, key: Any, data: Dict[str, Any]) -> Tuple[ExperimentConfig, SweepResult]:
        """Run the sweep described by `data` once per context and reuse it."""
        if key not in self.sweeps:
            config = parse_config({**data, "seed": self.seed})
            self.sweeps[key] = (config, run_sweep(config))
        return self.sweeps[key]


CheckFn = Callable[[VerifyContext], str]
_CHECKS: List[tuple] = []


def check(name: str, level: str = "fast"):
    """Register a check under a name; full checks only run at the full level."""
    def register(fn: CheckFn) -> CheckFn:
        _CHECKS.append((name, level, fn))
        return fn
    return register


def _random_chain(rng: np.random.Generator, n: int):
    p = rng.random((n, n)) + 0.05
    p /= p.sum(axis=1, keepdims=True)
    return build_chain(list(range(n)), p, rng.integers(0, 4, size=n))


@check("chain_validation")
def _chain_validation(ctx: VerifyContext) -> str:
    rejected = 0
    for transition, error in (
        ([[0.5, 0.4], [0.5, 0.5]], NonStochasticRow),
        ([[1.0, 0.0], [0.5, 0.5]], Reducible),
        ([[0.0, 1.0], [1.0, 0.0]], Periodic),
    ):
        try:
            build_chain(["a", "b"], transition, [0, 1])
        except error:
            rejected += 1
    ctx.require(rejected == 3, f"only {rejected} of 3 invalid chains rejected")
    pi = stationary_distribution(build_chain([0, 1], [[0.9, 0.1], [0.5, 0.5]], [0, 1])).probabilities
    ctx.require(np.allclose(pi, [5 / 6, 1 / 6], atol=1e-12), f"pi={pi}")
    return "3 invalid chains rejected, two-state pi exact"


@check("envelope_dominates_profile")
def _envelope_dominates(ctx: VerifyContext) -> str:
    rng = ctx.rng(1)
    worst = -math.inf
    for _ in range(100):
        chain = _random_chain(rng, int(rng.integers(2, 7)))
        envelope = envelope_for(chain)
        profile = mixing_profile(chain, 50)
        bound = np.array([envelope.bound(m) for m in range(1, 51)])
        worst = max(worst, float(np.max(profile - bound)))
    ctx.require(worst <= SOUNDNESS_TOL, f"profile exceeds envelope by {worst:.3g}")
    return "100 random chains, m = 1..50"


@check("mean_deviation_bound")
def _mean_deviation_bound(ctx: VerifyContext) -> str:
    rng = ctx.rng(2)
    chain = make_two_state_family(2, 0.4, 0.5).chain(0.1)
    envelope = envelope_for(chain)
    lam = stationary_distribution(chain).mean_emission
    f = chain.emission.astype(np.float64)
    worst = -math.inf
    for _ in range(50):
        mu = rng.dirichlet(np.ones(chain.n_states))
        for m in range(1, 51):
            mu = mu @ chain.transition
            gap = abs(float(mu @ f) - lam)
            worst = max(worst, gap - 2.0 * chain.a_max * envelope.bound(m))
    ctx.require(worst <= SOUNDNESS_TOL, f"deviation exceeds 2 A_max C alpha^m by {worst:.3g}")
    return "50 initial laws, m = 1..50"


@check("gamma_closed_form")
def _gamma_closed_form(ctx: VerifyContext) -> str:
    chain = make_two_state_family(2, 0.4, 0.5).chain(0.1)
    summary = autocovariance(chain, t_max=30)
    expected = summary.gamma[0] * 0.4 ** np.arange(31)
    deviation = float(np.max(np.abs(summary.gamma - expected)))
    ctx.require(deviation <= 1e-10, f"max deviation {deviation:.3g}")
    closed = summary.gamma[0] * 1.4 / 0.6
    ctx.require(abs(summary.sigma_sq - closed) <= 1e-8, f"sigma^2 {summary.sigma_sq} vs {closed}")
    return f"max deviation {deviation:.2g}"


@check("ssq_identities")
def _ssq_identities(ctx: VerifyContext) -> str:
    ctx.require(ssq_step(0, 0, 1) == (0, 1) and ssq_step(3, 2, 1) == (4, 0) and ssq_step(1, 0, 3) == (0, 2),
                "single-step recursion")
    rng = ctx.rng(3)
    a = rng.integers(0, 3, size=5000)
    s = rng.integers(0, 3, size=5000)
    _, q_next, unused = lindley_chunk(0, a, s)
    q = 0
    for t in range(a.size):
        q, u = ssq_step(q, int(a[t]), int(s[t]))
        ctx.require(q == q_next[t] and u == unused[t], f"slot {t} differs")
    return "vectorised recursion matches 5000 single steps"


@check("scheduler_optimality")
def _scheduler_optimality(ctx: VerifyContext) -> str:
    rng = ctx.rng(4)
    mismatches = 0
    for trial in range(1000):
        n = 2 + trial % 4
        q = rng.integers(0, 10, size=(n, n))
        scheduler = MaxWeightScheduler(n, rng, ctx.matcher)
        perm = tuple(int(c) for c in scheduler.choose(q))
        if perm not in brute_force_schedules(q):
            mismatches += 1
    ctx.require(mismatches == 0, f"{mismatches} of 1000 schedules not maximum weight")
    return "1000 random matrices, N = 2..5"


@check("tie_uniformity")
def _tie_uniformity(ctx: VerifyContext) -> str:
    scheduler = MaxWeightScheduler(3, ctx.rng(5), ctx.matcher)
    table = [tuple(row) for row in permutation_table(3).tolist()]
    q = np.zeros((3, 3), dtype=np.int64)
    counts = np.zeros(len(table))
    for _ in range(6000):
        counts[table.index(tuple(int(c) for c in scheduler.choose(q)))] += 1
    p_value = float(chisquare(counts).pvalue)
    ctx.require(p_value > 0.01, f"chi-square p = {p_value:.3g}")
    return f"chi-square p = {p_value:.3f}"


@check("projection_L_oracle")
def _projection_l_oracle(ctx: VerifyContext) -> str:
    rng = ctx.rng(6)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 6))
        x = rng.normal(size=(n, n))
        g = generators(n)
        w, *_ = np.linalg.lstsq(g, x.ravel(), rcond=None)
        worst = max(worst, float(np.max(np.abs(project_L(x) - (g @ w).reshape(n, n)))))
    ctx.require(worst <= 1e-10, f"max deviation {worst:.3g}")
    return f"max deviation {worst:.2g}"


@check("projection_identities")
def _projection_identities(ctx: VerifyContext) -> str:
    rng = ctx.rng(7)
    for _ in range(1000):
        n = int(rng.integers(2, 6))
        x = rng.normal(size=(n, n)) * 10
        y = rng.normal(size=(n, n)) * 10
        par = project_L(x)
        ctx.require(np.allclose(project_L(par), par, atol=1e-12), "project_L not idempotent")
        inner = float(np.sum((x - par) * project_L(y)))
        ctx.require(abs(inner) <= 1e-9 * np.linalg.norm(x) * np.linalg.norm(y), "x_perp_L not orthogonal to L")
        ctx.require(abs(norm_parallel_L_sq(x) - float(np.sum(par ** 2))) <= 1e-10 * max(1.0, float(np.sum(x ** 2))),
                    "norm_parallel_L_sq differs from ||project_L(x)||^2")
        cone = project_K(x)
        ctx.require(np.allclose(cone.parallel + cone.perp, x, atol=1e-9), "x_par_K + x_perp_K != x")
        ctx.require(abs(float(np.sum(cone.parallel * cone.perp))) <= 1e-8 * float(np.sum(x ** 2)),
                    "x_par_K not orthogonal to x_perp_K")
        ctx.require(np.all(cone.perp.sum(axis=1) <= 1e-9) and np.all(cone.perp.sum(axis=0) <= 1e-9),
                    "x_perp_K outside the polar cone")
        ctx.require(np.all(cone.weights >= 0), "negative cone weights")
        ctx.require(float(np.sum((x - par) ** 2)) <= float(np.sum(cone.perp ** 2)) + 1e-9,
                    "||x_perp_L|| > ||x_perp_K||")
    return "1000 random matrices, N = 2..5"


@check("cone_oracle")
def _cone_oracle(ctx: VerifyContext) -> str:
    rng = ctx.rng(8)
    worst = 0.0
    for _ in range(200):
        x = rng.normal(size=(3, 3))
        worst = max(worst, float(np.max(np.abs(project_K(x).parallel - brute_force_project_K(x)))))
    ctx.require(worst <= 1e-7, f"max deviation {worst:.3g}")
    return f"max deviation {worst:.2g}"


@check("maxweight_cone_gap")
def _maxweight_cone_gap(ctx: VerifyContext) -> str:
    rng = ctx.rng(9)
    for _ in range(300):
        n = int(rng.integers(2, 6))
        v = saturated_rate_matrix(n, seed=rng, preset="random")
        q = rng.integers(0, 50, size=(n, n))
        perp = float(np.linalg.norm(project_K(q).perp))
        if perp == 0.0:
            continue
        scheduler = MaxWeightScheduler(n, rng, ctx.matcher)
        s = np.zeros((n, n))
        s[np.arange(n), scheduler.choose(q)] = 1.0
        ctx.require(float(np.sum(q * (s - v))) >= min_rate(v) * perp - 1e-6, "MaxWeight gap below v_min ||q_perp_K||")
    return "300 random queue matrices"


@check("switch_step_identities")
def _switch_step_identities(ctx: VerifyContext) -> str:
    rng = ctx.rng(10)
    for _ in range(2000):
        n = int(rng.integers(2, 6))
        q = rng.integers(0, 3, size=(n, n))
        switch_step(q, rng.permutation(n), rng.integers(0, 2, size=(n, n)), check=True)
    return "2000 random slots"


@check("switch_predictions")
def _switch_predictions(ctx: VerifyContext) -> str:
    sigma = np.ones((2, 2))
    ctx.require(math.isclose(switch_prediction(sigma, 2), 3.0) and math.isclose(universal_lower(sigma), 2.0),
                "N=2 plug-in values")
    return "N=2 plug-in values"


def _ssq_acceptance(ctx: VerifyContext, kind: str) -> Tuple[ExperimentConfig, SweepResult]:
    return ctx.sweep(("ssq", kind), {"model": "ssq", "family": {"kind": kind},
                                     "horizon": ACCEPTANCE_HORIZON, "replications": SSQ_REPLICATIONS})


def _switch_acceptance(ctx: VerifyContext, n: int) -> SweepResult:
    _, result = ctx.sweep(("switch", n), {"model": "switch", "n": n, "epsilons": list(SWITCH_GRID),
                                          "horizon": ACCEPTANCE_HORIZON})
    return result


def _at(result: SweepResult, eps: float) -> SweepRecord:
    return next(r for r in result.records if math.isclose(r.epsilon, eps))


def _limit_detail(result: SweepResult, eps: float, band: float) -> str:
    record = _at(result, eps)
    return f"ratio {record.ratio:.3f} at eps={eps}, extrapolated {result.extrapolated_ratio:.3f} (band {band})"


def _require_limit(ctx: VerifyContext, result: SweepResult, eps: float, band: float) -> None:
    record = _at(result, eps)
    ctx.require(abs(record.ratio - 1.0) <= LIMIT_TOLERANCE, f"ratio {record.ratio:.3f} at eps={eps}")
    ctx.require(abs(result.extrapolated_ratio - 1.0) <= band, f"extrapolated ratio {result.extrapolated_ratio:.3f}")


@check("ssq_unused_identity", level="full")
def _ssq_unused_identity(ctx: VerifyContext) -> str:
    family = make_iid_family({1: 1.0}, 0.5)
    stats = simulate_ssq(SsqConfig(family=family, epsilon=0.2, service=ServiceDistribution.bernoulli(0.5),
                                   horizon=1_100_000, seed=ctx.seed))
    return f"mean unused {stats.mean_unused:.4f} vs 0.2"


@check("ssq_heavy_traffic_limit", level="full")
def _ssq_limit(ctx: VerifyContext) -> str:
    config, result = _ssq_acceptance(ctx, "two_state")
    _require_limit(ctx, result, 0.02, 0.05)
    record = _at(result, 0.02)
    for theta in config.thetas:
        value, expected = record.values[f"mgf_theta_{theta}"], record.values[f"laplace_pred_{theta}"]
        ctx.require(abs(value / expected - 1.0) <= 0.05, f"theta={theta}: {value:.4f} vs {expected:.4f}")
    return _limit_detail(result, 0.02, 0.05)


@check("ssq_bounds_along_grid", level="full")
def _ssq_bounds_along_grid(ctx: VerifyContext) -> str:
    _, result = _ssq_acceptance(ctx, "two_state")
    for record in result.records:
        lower, upper = record.values["lower_bound"], record.values["upper_bound"]
        slack = 2.0 * widest_ci(record.ci, record.values["batch_ci"])
        ctx.require(record.values["within_bounds"],
                    f"eps={record.epsilon}: {record.estimate:.4f} outside [{lower:.4f}, {upper:.4f}] +- {slack:.4f}")
    return f"{len(result.records)} grid points inside their bounds"


@check("ssq_iid_limit", level="full")
def _ssq_iid_limit(ctx: VerifyContext) -> str:
    _, result = _ssq_acceptance(ctx, "iid")
    _require_limit(ctx, result, 0.02, 0.05)
    return _limit_detail(result, 0.02, 0.05)


@check("switch_unused_identity", level="full")
def _switch_unused_identity(ctx: VerifyContext) -> str:
    family = make_two_state_family(2, 0.4, saturated_rate_matrix(2))
    stats = simulate_switch(family, 0.1, 1_000_000, seed=ctx.seed)
    return f"sum unused {stats.sum_unused:.4f} vs 0.2"


@check("switch_interior_stable", level="full")
def _switch_interior_stable(ctx: VerifyContext) -> str:
    family = make_iid_family({1: 1.0}, saturated_rate_matrix(2))
    stats = simulate_switch(family, 0.1, 1_000_000, burn_in=100_000, seed=ctx.seed)
    third, fourth = stats.quarter_means[2], stats.quarter_means[3]
    change = abs(fourth - third) / max(third, 1e-9)
    ctx.require(change < 0.2, f"quarter means {third:.3f} -> {fourth:.3f}")
    return f"last quarters differ by {change:.1%}"


@check("switch_outside_diverges", level="full")
def _switch_outside_diverges(ctx: VerifyContext) -> str:
    family = make_iid_family({1: 1.0}, saturated_rate_matrix(2))
    chains = chains_for_rates(family, np.full((2, 2), 0.55))
    trace = switch_sum_trace(chains, 100_000, seed=ctx.seed, record_at=(10_000, 100_000))
    growth = trace[100_000] / max(trace[10_000], 1)
    ctx.require(growth > 8.0, f"sum Q grew only {growth:.2f}x")
    return f"sum Q grew {growth:.1f}x"


@check("switch_heavy_traffic_limit", level="full")
def _switch_limit(ctx: VerifyContext) -> str:
    eps = SWITCH_GRID[-1]
    ratios = []
    for n in SWITCH_SIZES:
        record = _at(_switch_acceptance(ctx, n), eps)
        ctx.require(abs(record.ratio - 1.0) <= LIMIT_TOLERANCE, f"N={n}: ratio {record.ratio:.3f} at eps={eps}")
        ratios.append(f"N={n} {record.ratio:.3f}")
    return f"ratios at eps={eps}: {', '.join(ratios)}"


@check("switch_extrapolated_limit", level="full")
def _switch_extrapolated_limit(ctx: VerifyContext) -> str:
    ratios = []
    for n in SWITCH_SIZES:
        extrapolated = _switch_acceptance(ctx, n).extrapolated_ratio
        ctx.require(abs(extrapolated - 1.0) <= 0.1, f"N={n}: extrapolated ratio {extrapolated:.3f}")
        ratios.append(f"N={n} {extrapolated:.3f}")
    return f"extrapolated ratios {', '.join(ratios)}"


@check("switch_universal_lower", level="full")
def _switch_universal_lower(ctx: VerifyContext) -> str:
    reached = []
    for n in SWITCH_SIZES:
        result = _switch_acceptance(ctx, n)
        for record in result.records:
            floor = record.values["universal_lower"]
            slack = 2.0 * widest_ci(record.ci, record.values["batch_ci"])
            ctx.require(record.estimate >= floor - slack,
                        f"N={n}, eps={record.epsilon}: {record.estimate:.4f} below {floor:.4f} - {slack:.4f}")
        smallest = result.records[-1]
        reached.append(f"N={n} {smallest.estimate / smallest.values['universal_lower']:.3f}"
                       f" of {optimality_ratio(n):.3f}")
    return f"optimality ratio {', '.join(reached)}"


@check("switch_state_space_collapse", level="full")
def _switch_state_space_collapse(ctx: VerifyContext) -> str:
    coarse, fine = SWITCH_GRID[0], SWITCH_GRID[-1]
    growths = []
    for n in SWITCH_SIZES:
        result = _switch_acceptance(ctx, n)
        first, last = _at(result, coarse), _at(result, fine)
        perp = (first.values["perp_k_sq"], last.values["perp_k_sq"])
        change = max(perp) / max(min(perp), 1e-12)
        ctx.require(change <= 2.0, f"N={n}: E||Q_perp_K||^2 changed {change:.2f}x from eps={coarse} to eps={fine}")
        growth = last.values["parallel_k_sq"] / max(first.values["parallel_k_sq"], 1e-12)
        ctx.require(growth >= 15.0, f"N={n}: E||Q_par_K||^2 grew only {growth:.1f}x from eps={coarse} to eps={fine}")
        growths.append(f"N={n} perp {change:.2f}x, parallel {growth:.1f}x")
    return "; ".join(growths)


def verify(level: str = "fast", matcher: Optional[Matcher] = None, seed: int = 0) -> VerifyReport:
    """
    Run every check of the level and collect the outcomes.

    Args:
        level: "fast" or "full"
        matcher: Assignment solver handed to the scheduler checks
        seed: Root seed of the randomised checks

    Returns:
        VerifyReport: One result per check, in registration order
    """
    if level not in LEVELS:
        raise ValueError(f"Unknown level {level!r}; expected one of {LEVELS}")
    context = VerifyContext(seed=seed, matcher=matcher)
    report = VerifyReport(level=level)
    for name, check_level, _ in _CHECKS:
        if check_level == "full" and level != "full":
            continue
        report.results.append(run_check(name, context))
    return report


def run_check(name: str, context: VerifyContext) -> CheckResult:
    """
    Run one registered check.

    Raises:
        KeyError: If no check is registered under `name`
    """
    fn = next((fn for check_name, _, fn in _CHECKS if check_name == name), None)
    if fn is None:
        raise KeyError(name)
    context.current = name
    start = time.perf_counter()
    try:
        detail = fn(context)
        passed = True
    except InvariantViolation as exc:
        detail = exc.detail or str(exc)
        passed = False
    except HeavyTrafficError as exc:
        detail = str(exc)
        passed = False
    elapsed = time.perf_counter() - start
    if passed:
        logger.info(f"{name}: pass ({detail})")
    else:
        logger.error(f"{name}: FAIL ({detail})")
    return CheckResult(name=name, passed=passed, detail=detail, seconds=elapsed)
