"""
Shared fixtures for the test suite.
"""

import os
import sys

import numpy as np
import pytest

# Keep test runs from writing log files
os.environ.setdefault("HTQ_LOG_FILE", "")

# Adjust the path to import the project modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.arrivals.families import make_iid_family, make_two_state_family  # noqa: E402
from src.markov.chain import build_chain  # noqa: E402


@pytest.fixture
def two_state_chain():
    """P = [[0.9, 0.1], [0.5, 0.5]] with one arrival in the second state."""
    return build_chain(["OFF", "ON"], [[0.9, 0.1], [0.5, 0.5]], [0, 1])


@pytest.fixture
def reference_family():
    """ON/OFF family with peak 2, r = 0.4 and v = 0.5."""
    return make_two_state_family(2, 0.4, 0.5)


@pytest.fixture
def bernoulli_family():
    """I.i.d. Bernoulli arrivals targeting v = 0.5."""
    return make_iid_family({1: 1.0}, 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
