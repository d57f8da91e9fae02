"""
Tests for the invariant suite.
"""

import ast
import inspect

import numpy as np
import pytest

from src.errors import InvariantViolation
from src.harness import verify as verify_module
from src.harness.verify import CheckResult, VerifyContext, VerifyReport, run_check, verify


def test_fast_level_passes():
    """Every fast check passes with the default matcher."""
    report = verify("fast")
    assert report.passed, report.lines()
    names = [r.name for r in report.results]
    assert "scheduler_optimality" in names
    assert "ssq_heavy_traffic_limit" not in names
    assert "switch_state_space_collapse" not in names


def test_faulty_matcher_fails_optimality():
    """A matcher that always returns the identity matching is caught."""
    report = verify("fast", matcher=lambda weights: np.arange(weights.shape[0]))
    assert not report.passed
    assert "scheduler_optimality" in report.failures
    detail = next(r.detail for r in report.results if r.name == "scheduler_optimality")
    assert "not maximum weight" in detail


def test_unknown_level():
    """Only the fast and full levels exist."""
    with pytest.raises(ValueError):
        verify("thorough")


def test_report_lines():
    """Report lines carry status, name and detail."""
    report = VerifyReport(level="fast", results=[
        CheckResult(name="a", passed=True, detail="ok", seconds=0.1),
        CheckResult(name="b", passed=False, detail="broken", seconds=0.2),
    ])
    lines = report.lines()
    assert lines[0].startswith("PASS") and "ok" in lines[0]
    assert lines[1].startswith("FAIL") and "broken" in lines[1]
    assert report.failures == ["b"]


def test_require_raises_invariant_violation():
    """A failed requirement names the running check and carries the detail."""
    context = VerifyContext(seed=0, matcher=None, current="cone_oracle")
    context.require(True, "unused")
    with pytest.raises(InvariantViolation) as excinfo:
        context.require(False, "max deviation 0.5")
    assert excinfo.value.name == "cone_oracle"
    assert excinfo.value.detail == "max deviation 0.5"


def test_checks_do_not_rely_on_assert_statements():
    """Checks keep failing under python -O, which strips assert statements."""
    tree = ast.parse(inspect.getsource(verify_module))
    assert not any(isinstance(node, ast.Assert) for node in ast.walk(tree))


def test_run_check_reports_failure_detail(monkeypatch):
    """A check that fails its requirement is reported with its own detail."""
    def failing(ctx):
        ctx.require(1 + 1 == 3, "arithmetic is off")
        return "unreachable"

    monkeypatch.setattr(verify_module, "_CHECKS", [("arithmetic", "fast", failing)])
    result = run_check("arithmetic", VerifyContext(seed=0, matcher=None))
    assert not result.passed
    assert result.detail == "arithmetic is off"
    with pytest.raises(KeyError):
        run_check("missing", VerifyContext(seed=0, matcher=None))


def test_sweeps_are_shared_within_a_context(monkeypatch):
    """Two checks asking for the same sweep run it once."""
    calls = []
    monkeypatch.setattr(verify_module, "run_sweep", lambda config: calls.append(config) or "result")
    context = VerifyContext(seed=5, matcher=None)
    data = {"model": "ssq", "epsilons": [0.3], "horizon": 20_000, "burn_in": 1_000}
    first = context.sweep("key", data)
    second = context.sweep("key", data)
    assert first is second
    assert len(calls) == 1
    assert calls[0].seed == 5


@pytest.mark.slow
def test_full_level_passes():
    """The whole suite, simulation checks included, passes."""
    report = verify("full")
    assert report.passed, report.lines()


if __name__ == "__main__":
    pytest.main(["-xvs", __file__])
