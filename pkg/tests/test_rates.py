"""
Tests for saturated target rate matrices.
"""

import numpy as np
import pytest

from src.arrivals.rates import min_rate, saturated_rate_matrix
from src.switch.geometry import CapacityPosition, capacity_position


def test_uniform_preset():
    """The uniform preset is 1/N everywhere."""
    v = saturated_rate_matrix(4)
    assert np.allclose(v, 0.25)
    assert min_rate(v) == pytest.approx(0.25)


@pytest.mark.parametrize("n", [2, 3, 5, 8])
def test_random_preset_is_doubly_stochastic(n):
    """Random presets keep unit row and column sums and a positive floor."""
    v = saturated_rate_matrix(n, seed=n, preset="random")
    assert np.allclose(v.sum(axis=0), 1.0, atol=1e-12)
    assert np.allclose(v.sum(axis=1), 1.0, atol=1e-12)
    assert min_rate(v) >= 1.0 / n ** 2 - 1e-15
    assert capacity_position(v) == CapacityPosition.ON_FACE_F


def test_random_preset_is_seeded():
    """Same seed, same matrix; another seed, another matrix."""
    first = saturated_rate_matrix(3, seed=9, preset="random")
    assert np.array_equal(first, saturated_rate_matrix(3, seed=9, preset="random"))
    assert not np.array_equal(first, saturated_rate_matrix(3, seed=10, preset="random"))


def test_invalid_arguments():
    """N < 2 and unknown presets are rejected."""
    with pytest.raises(ValueError):
        saturated_rate_matrix(1)
    with pytest.raises(ValueError):
        saturated_rate_matrix(3, preset="diagonal")


if __name__ == "__main__":
    pytest.main(["-xvs", __file__])
