"""
Tests for chain sampling and the empirical variance rate.
"""

import numpy as np
import pytest

from src.errors import UnknownState
from src.markov.autocov import autocovariance, finite_window_variance
from src.markov.chain import build_chain
from src.markov.mixing import envelope_for
from src.markov.sampling import ChainSampler, empirical_variance_rate, sample_path


def test_same_seed_same_path(two_state_chain):
    """Same seed, same path."""
    first = sample_path(two_state_chain, 5000, seed=7)
    second = sample_path(two_state_chain, 5000, seed=7)
    assert np.array_equal(first, second)
    assert not np.array_equal(first, sample_path(two_state_chain, 5000, seed=8))


@pytest.mark.parametrize("iid", [False, True])
def test_path_does_not_depend_on_chunking(iid):
    """Drawing in chunks gives the same emissions as one draw."""
    rows = [[0.6, 0.4], [0.6, 0.4]] if iid else [[0.9, 0.1], [0.5, 0.5]]
    chain = build_chain([0, 1], rows, [0, 2])
    whole = ChainSampler(chain, 3).next_emissions(100_000)
    sampler = ChainSampler(chain, 3)
    pieces = [sampler.next_emissions(k) for k in (1, 99, 900, 99_000)]
    assert np.array_equal(np.concatenate(pieces), whole)


def test_long_run_mean(two_state_chain):
    """The path average approaches lambda = 1/6."""
    path = sample_path(two_state_chain, 200_000, seed=11)
    assert path.mean() == pytest.approx(1 / 6, abs=0.01)


def test_transition_frequencies(two_state_chain):
    """Empirical stay probability from ON matches P(ON, ON)."""
    _, states = sample_path(two_state_chain, 200_000, seed=5, return_states=True)
    from_on = states[:-1] == 1
    stay_on = np.mean(states[1:][from_on] == 1)
    assert stay_on == pytest.approx(0.5, abs=0.02)


def test_initial_state(two_state_chain):
    """Paths can start from a named state; unknown names raise."""
    _, states = sample_path(two_state_chain, 10, seed=1, initial_state="ON", return_states=True)
    assert states[0] == 1
    with pytest.raises(UnknownState):
        sample_path(two_state_chain, 10, seed=1, initial_state="BUSY")


def test_initial_distribution_validation(two_state_chain):
    """Initial distributions must be probability vectors."""
    with pytest.raises(ValueError):
        ChainSampler(two_state_chain, 0, initial_distribution=[0.5, 0.6])


def test_empirical_variance_rate_matches_exact(reference_family):
    """Batch variance of a long path agrees with the exact sigma^2."""
    chain = reference_family.chain(0.1)
    alpha = envelope_for(chain).alpha
    m = int(np.ceil(50 / (1 - alpha)))
    estimate = empirical_variance_rate(chain, m, replications=40_000, seed=2024)
    exact = finite_window_variance(chain, m)
    assert abs(estimate.value - exact) <= 4 * estimate.std_error
    sigma_sq = autocovariance(chain, t_max=0).sigma_sq
    assert estimate.value == pytest.approx(sigma_sq, rel=0.05)


def test_empirical_autocovariance_matches_exact():
    """Lagged products of a 10^6-step path agree with the exact gamma(t), t <= 5."""
    chain = build_chain([0, 1], [[0.9, 0.1], [0.5, 0.5]], [0, 2])
    exact = autocovariance(chain, t_max=5).gamma
    assert exact[1] == pytest.approx(2 / 9, abs=1e-12)

    centred = sample_path(chain, 1_000_005, seed=31).astype(np.float64) - 1 / 3
    n = centred.size - 5
    for t in range(6):
        products = centred[:n] * centred[t:t + n]
        batches = products.reshape(100, -1).mean(axis=1)
        std_error = batches.std(ddof=1) / np.sqrt(batches.size)
        gap = abs(products.mean() - exact[t])
        assert gap <= 4 * std_error, f"lag {t}: {products.mean():.5f} vs {exact[t]:.5f}"
        if t == 1:
            assert gap <= 3 * std_error


if __name__ == "__main__":
    pytest.main(["-xvs", __file__])
