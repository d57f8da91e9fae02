"""
Tests for exact autocovariances and the asymptotic variance.
"""

import numpy as np
import pytest

from src.markov.autocov import autocovariance, finite_window_variance
from src.markov.chain import build_chain, stationary_distribution


def test_two_state_closed_form(two_state_chain):
    """gamma(t) = (5/36) 0.4^t and sigma^2 = 35/108."""
    summary = autocovariance(two_state_chain, t_max=20)
    expected = (5 / 36) * 0.4 ** np.arange(21)
    assert np.max(np.abs(summary.gamma - expected)) <= 1e-10
    assert summary.sigma_sq == pytest.approx(35 / 108, abs=1e-8)
    assert summary.truncation_tail < 1e-9


def test_family_chain_keeps_decay_rate(reference_family):
    """Moving the rate along the family keeps gamma(t+1)/gamma(t) = 0.4."""
    for eps in (0.2, 0.05, 0.01):
        summary = autocovariance(reference_family.chain(eps), t_max=10)
        ratios = summary.gamma[1:] / summary.gamma[:-1]
        assert np.allclose(ratios, 0.4, atol=1e-8)
        assert summary.sigma_sq == pytest.approx(summary.gamma[0] * 1.4 / 0.6, rel=1e-8)


def test_iid_chain_has_no_correlation():
    """I.i.d. emissions have gamma(t) = 0 for t >= 1."""
    chain = build_chain([0, 1], [[0.7, 0.3], [0.7, 0.3]], [0, 1])
    summary = autocovariance(chain, t_max=5)
    assert summary.gamma[0] == pytest.approx(0.21, abs=1e-15)
    assert np.all(summary.gamma[1:] == 0.0)
    assert summary.sigma_sq == pytest.approx(0.21, abs=1e-15)
    assert summary.truncation_tail == 0.0


def test_gamma_length_and_lag_bound(two_state_chain):
    """gamma holds lags 0..t_max and each lag respects the covariance bound."""
    summary = autocovariance(two_state_chain, t_max=7)
    assert summary.gamma.shape == (8,)
    mean = stationary_distribution(two_state_chain).mean_emission
    for t in range(1, 8):
        assert abs(summary.gamma[t]) <= summary.lag_bound(t, two_state_chain.a_max, mean) + 1e-12


def test_finite_window_variance_converges(two_state_chain):
    """Var(sum over m slots) / m approaches sigma^2 as m grows."""
    summary = autocovariance(two_state_chain, t_max=0)
    assert finite_window_variance(two_state_chain, 1) == pytest.approx(summary.gamma[0], abs=1e-15)
    values = [finite_window_variance(two_state_chain, m) for m in (10, 100, 1000)]
    gaps = [abs(v - summary.sigma_sq) for v in values]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-3


def test_invalid_arguments(two_state_chain):
    """Negative lags and non-positive tail tolerances are rejected."""
    with pytest.raises(ValueError):
        autocovariance(two_state_chain, t_max=-1)
    with pytest.raises(ValueError):
        autocovariance(two_state_chain, t_max=3, tail_tol=0.0)
    with pytest.raises(ValueError):
        finite_window_variance(two_state_chain, 0)


if __name__ == "__main__":
    pytest.main(["-xvs", __file__])
