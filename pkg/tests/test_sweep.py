"""
Tests for epsilon sweeps and their CSV output.
"""

import math

import pandas as pd
import pytest

from src.errors import IoError
from src.harness.config import build_family, parse_config
from src.harness.sweep import (
    SSQ_COLUMNS,
    SWITCH_COLUMNS,
    TRAILING_COLUMNS,
    SweepRecord,
    _ssq_record,
    extrapolate_ratio,
    job_seed,
    monotone_gaps,
    run_sweep,
    worker_count,
    write_csv,
)
from src.ssq.queue import SsqStats


def _ssq_config(**overrides):
    data = {
        "model": "ssq",
        "epsilons": [0.3, 0.2],
        "horizon": 40_000,
        "burn_in": 5_000,
        "n_batches": 10,
        "thetas": [-1.0],
        "threads": 1,
        "seed": 9,
    }
    data.update(overrides)
    return parse_config(data)


def _switch_config(**overrides):
    data = {
        "model": "switch",
        "n": 2,
        "family": {"kind": "iid"},
        "epsilons": [0.3, 0.2],
        "horizon": 12_000,
        "burn_in": 2_000,
        "n_batches": 10,
        "metric_stride": 4,
        "threads": 1,
        "seed": 4,
    }
    data.update(overrides)
    return parse_config(data)


def test_ssq_sweep_writes_csv(tmp_path):
    """An ssq sweep writes the documented columns with NA for missing CIs."""
    out = tmp_path / "results" / "ssq.csv"
    result = run_sweep(_ssq_config(), out=out)
    assert [r.epsilon for r in result.records] == [0.3, 0.2]
    assert result.columns == SSQ_COLUMNS + ("mgf_theta_-1.0", "laplace_pred_-1.0") + TRAILING_COLUMNS

    frame = pd.read_csv(out, keep_default_na=False)
    assert list(frame.columns) == list(result.columns)
    assert len(frame) == 2
    assert (frame["ci"] == "NA").all()
    for record in result.records:
        assert record.prediction == pytest.approx(1.0)
        assert record.values["m_window"] >= 1
        assert record.values["lower_bound"] >= 0.0


def test_single_replication_has_no_interval():
    """One replication leaves the across-run CI unset but keeps the batch-means CI."""
    result = run_sweep(_ssq_config())
    assert all(math.isnan(r.ci) for r in result.records)
    assert all(r.values["batch_ci"] > 0 for r in result.records)
    assert all(isinstance(r.values["within_bounds"], bool) for r in result.records)


def _ssq_stats(eps, scaled, half_width):
    return SsqStats(epsilon=eps, mean_q=scaled / eps, scaled_mean_q=scaled, mean_unused=eps,
                    mgf_estimates={-1.0: 0.5}, ci_halfwidths={"mean_q": half_width}, std_errors={},
                    quarter_means=(1.0, 1.0, 1.0, 1.0), slots=1_000, seed=0)


def test_ssq_record_compares_estimate_with_bounds():
    """The record flags an estimate outside [lower - 2 CI, upper + 2 CI]."""
    config = _ssq_config()
    family = build_family(config)
    lower = _ssq_record(config, family, 0.2, [_ssq_stats(0.2, 1.0, 0.0)]).values["lower_bound"]

    on_lower = _ssq_record(config, family, 0.2, [_ssq_stats(0.2, lower, 0.0)])
    assert on_lower.values["within_bounds"] is True

    below = _ssq_record(config, family, 0.2, [_ssq_stats(0.2, lower - 1.0, 0.01)])
    assert below.values["within_bounds"] is False
    assert below.values["batch_ci"] == pytest.approx(0.002)

    # 2 x eps x half-width = 1.2 covers the gap
    widened = _ssq_record(config, family, 0.2, [_ssq_stats(0.2, lower - 1.0, 3.0)])
    assert widened.values["within_bounds"] is True


def test_csv_is_reproducible(tmp_path):
    """The same config writes byte-identical CSVs."""
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    run_sweep(_ssq_config(), out=first)
    run_sweep(_ssq_config(), out=second)
    assert first.read_bytes() == second.read_bytes()


def test_worker_count_does_not_change_results():
    """Serial and parallel runs give the same frame."""
    serial = run_sweep(_ssq_config(replications=2, threads=1)).frame()
    parallel = run_sweep(_ssq_config(replications=2, threads=2)).frame()
    pd.testing.assert_frame_equal(serial, parallel)
    assert serial["ci"].notna().all()


def test_switch_sweep(tmp_path):
    """A switch sweep reports predictions and collapse metrics per eps."""
    out = tmp_path / "switch.csv"
    result = run_sweep(_switch_config(output=str(out)))
    assert result.columns == SWITCH_COLUMNS + TRAILING_COLUMNS
    assert out.exists()
    for record in result.records:
        assert record.values["n"] == 2
        assert record.prediction == pytest.approx(0.75 * 4 * 0.25)
        assert record.values["universal_lower"] == pytest.approx(0.5)
        assert record.values["perp_l_sq"] <= record.values["perp_k_sq"] + 1e-9


def _record(eps, ratio, ci=0.0):
    return SweepRecord(epsilon=eps, estimate=ratio, ci=ci, prediction=1.0, seed=0, slots=1)


def test_extrapolate_ratio():
    """A ratio linear in sqrt(eps) extrapolates to its intercept."""
    records = [_record(eps, 1.0 + 2.0 * math.sqrt(eps)) for eps in (0.2, 0.1, 0.05, 0.02)]
    assert extrapolate_ratio(records) == pytest.approx(1.0)
    assert extrapolate_ratio(records[:1]) == pytest.approx(records[0].ratio)
    assert math.isnan(extrapolate_ratio([]))


def test_monotone_gaps():
    """Gaps may only grow within the CI slack."""
    assert monotone_gaps([_record(0.2, 1.3), _record(0.1, 1.2), _record(0.05, 1.1)])
    assert not monotone_gaps([_record(0.2, 1.1), _record(0.1, 1.3)])
    assert monotone_gaps([_record(0.2, 1.1, ci=0.2), _record(0.1, 1.3, ci=0.2)])


def test_job_seeds():
    """Job seeds are deterministic and distinct."""
    assert job_seed(0, 1, 2) == job_seed(0, 1, 2)
    seeds = {job_seed(0, e, r) for e in range(5) for r in range(3)}
    assert len(seeds) == 15


def test_worker_count():
    """Workers never exceed jobs or the configured threads."""
    assert worker_count(_ssq_config(threads=3), 2) == 2
    assert worker_count(_ssq_config(threads=1), 10) == 1


def test_write_csv_error(tmp_path):
    """An unwritable path raises IoError."""
    blocker = tmp_path / "file.txt"
    blocker.write_text("x")
    with pytest.raises(IoError):
        write_csv(pd.DataFrame({"a": [1]}), blocker / "out.csv")


if __name__ == "__main__":
    pytest.main(["-xvs", __file__])
