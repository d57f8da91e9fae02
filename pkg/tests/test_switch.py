"""
Tests for the switch dynamics and simulation.
"""

import numpy as np
import pytest

from src.arrivals.families import make_iid_family, make_two_state_family
from src.arrivals.rates import saturated_rate_matrix
from src.errors import ConfigInvalid, InvariantViolation
from src.harness.verify import VerifyContext, run_check
from src.switch.scheduler import Schedule
from src.switch.simulate import (
    chains_for_rates,
    check_switch_identities,
    collapse_metrics,
    simulate_switch,
    switch_step,
    switch_sum_trace,
    v_min_threshold,
)


@pytest.fixture
def uniform_iid_family():
    """I.i.d. Bernoulli arrivals per queue targeting v_ij = 1/2."""
    return make_iid_family({1: 1.0}, saturated_rate_matrix(2))


@pytest.fixture(scope="module")
def acceptance_context():
    """One context per module, so the N=2 and N=3 sweeps run once for all acceptance tests."""
    return VerifyContext(seed=0, matcher=None)


def test_switch_step_serves_matched_queues():
    """Matched queues lose one packet before arrivals are added."""
    q_next, unused = switch_step(np.array([[2, 0], [0, 1]]), Schedule((0, 1)), np.array([[0, 1], [0, 0]]))
    assert q_next.tolist() == [[1, 1], [0, 0]]
    assert unused.tolist() == [[0, 0], [0, 0]]


def test_switch_step_records_unused_service():
    """Service offered to an empty queue is recorded as unused."""
    q_next, unused = switch_step(np.zeros((2, 2), dtype=int), np.array([1, 0]), np.array([[1, 0], [0, 0]]))
    assert q_next.tolist() == [[1, 0], [0, 0]]
    assert unused.tolist() == [[0, 1], [1, 0]]


def test_switch_identity_violations():
    """Each broken per-slot identity raises under its own name."""
    service = np.array([[[1, 0], [0, 1]]])
    with pytest.raises(InvariantViolation) as excinfo:
        check_switch_identities(np.array([[[1, 0], [0, 0]]]), np.array([[[1, 0], [0, 0]]]), service)
    assert excinfo.value.name == "switch_complementary_slackness"
    with pytest.raises(InvariantViolation) as excinfo:
        check_switch_identities(np.zeros((1, 2, 2), dtype=int), np.array([[[0, 1], [0, 0]]]), service)
    assert excinfo.value.name == "switch_unused_below_service"
    with pytest.raises(InvariantViolation) as excinfo:
        check_switch_identities(np.zeros((1, 2, 2), dtype=int), np.array([[[1, 1], [0, 0]]]),
                                np.array([[[1, 1], [0, 0]]]))
    assert excinfo.value.name == "switch_unused_port_sums"


def test_random_steps_keep_identities(rng):
    """Random slots keep queues non-negative and unused service within port capacity."""
    for _ in range(500):
        n = int(rng.integers(2, 5))
        q = rng.integers(0, 3, size=(n, n))
        q_next, unused = switch_step(q, rng.permutation(n), rng.integers(0, 2, size=(n, n)))
        assert np.all(q_next >= 0)
        assert np.all(unused.sum(axis=0) <= 1) and np.all(unused.sum(axis=1) <= 1)


def test_collapse_metrics():
    """A constant matrix lies in K; a single loaded queue splits into orthogonal parts."""
    perp_k, perp_l, parallel_k = collapse_metrics(np.full((3, 3), 4))
    assert perp_k == pytest.approx(0.0, abs=1e-9)
    assert perp_l == pytest.approx(0.0, abs=1e-9)
    assert parallel_k == pytest.approx(144.0)

    perp_k, perp_l, parallel_k = collapse_metrics(np.array([[5, 0], [0, 0]]))
    assert perp_l <= perp_k + 1e-9
    assert perp_k + parallel_k == pytest.approx(25.0)


def test_v_min_threshold():
    """Uniform 2 x 2 rates give v_min / (2 ||v||) = 1/4."""
    assert v_min_threshold(np.full((2, 2), 0.5)) == pytest.approx(0.25)


def test_simulate_switch_small_run(uniform_iid_family):
    """A short run reports every estimate and meets the unused-service identity."""
    stats = simulate_switch(uniform_iid_family, 0.3, 22_000, burn_in=2_000, seed=3, n_batches=10, metric_stride=4)
    assert stats.n == 2
    assert stats.slots == 20_000
    assert stats.sum_unused == pytest.approx(0.6, abs=4 * stats.ci_halfwidths["sum_unused"] + 1e-9)
    assert stats.scaled_sum_q == pytest.approx(0.3 * stats.mean_sum_q)
    assert stats.perp_l_sq <= stats.perp_k_sq + 1e-9
    assert set(stats.ci_halfwidths) == {"sum_q", "sum_unused", "perp_k_sq", "perp_l_sq", "parallel_k_sq"}
    assert len(stats.quarter_means) == 4


def test_simulate_switch_is_reproducible(uniform_iid_family):
    """Same seed, same statistics."""
    kwargs = dict(burn_in=1_000, seed=5, n_batches=10, metric_stride=4)
    first = simulate_switch(uniform_iid_family, 0.3, 11_000, **kwargs)
    second = simulate_switch(uniform_iid_family, 0.3, 11_000, **kwargs)
    assert first == second


def test_simulate_switch_rejects_bad_arguments(uniform_iid_family, reference_family):
    """Scalar families, bad epsilons, strides, horizons and interior rates are rejected."""
    with pytest.raises(ConfigInvalid):
        simulate_switch(reference_family, 0.1, 10_000, burn_in=0)
    with pytest.raises(ConfigInvalid):
        simulate_switch(uniform_iid_family, 1.5, 10_000, burn_in=0)
    with pytest.raises(ConfigInvalid):
        simulate_switch(uniform_iid_family, 0.1, 10_000, burn_in=0, metric_stride=0)
    with pytest.raises(ConfigInvalid):
        simulate_switch(uniform_iid_family, 0.1, 100, burn_in=0, n_batches=30, metric_stride=8)
    interior = make_iid_family({1: 1.0}, np.full((2, 2), 0.4))
    with pytest.raises(ConfigInvalid):
        simulate_switch(interior, 0.1, 10_000, burn_in=0)


def test_bursty_family_runs():
    """Two-state arrivals drive a switch run."""
    family = make_two_state_family(2, 0.4, saturated_rate_matrix(2))
    stats = simulate_switch(family, 0.3, 12_000, burn_in=2_000, seed=1, n_batches=10, metric_stride=8)
    assert stats.mean_sum_q > 0


def test_outside_capacity_grows(uniform_iid_family):
    """Rates outside the capacity region make the total queue grow."""
    chains = chains_for_rates(uniform_iid_family, np.full((2, 2), 0.6))
    trace = switch_sum_trace(chains, 20_000, seed=0, record_at=(2_000, 20_000))
    assert set(trace) == {2_000, 20_000}
    assert trace[20_000] > 5 * trace[2_000]


def test_sum_trace_validates_slots(uniform_iid_family):
    """Recording slots must lie in 1..horizon."""
    chains = chains_for_rates(uniform_iid_family, np.full((2, 2), 0.4))
    with pytest.raises(ValueError):
        switch_sum_trace(chains, 100, record_at=(0,))
    with pytest.raises(ValueError):
        switch_sum_trace(chains, 100, record_at=(101,))


def test_chains_for_rates_checks_shape(uniform_iid_family, bernoulli_family):
    """Rate matrices must match a matrix family's shape."""
    with pytest.raises(ValueError):
        chains_for_rates(uniform_iid_family, np.full((3, 3), 0.2))
    with pytest.raises(ValueError):
        chains_for_rates(bernoulli_family, np.full((2, 2), 0.2))


@pytest.mark.slow
@pytest.mark.parametrize("name", [
    "switch_heavy_traffic_limit",
    "switch_universal_lower",
    "switch_state_space_collapse",
])
def test_switch_acceptance(name, acceptance_context):
    """N=2 and N=3 sweeps at eps = 0.1, 0.05, 0.02 meet the limit, lower bound and collapse scaling."""
    result = run_check(name, acceptance_context)
    assert result.passed, result.detail


if __name__ == "__main__":
    pytest.main(["-xvs", __file__])
