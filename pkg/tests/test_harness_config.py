"""
Tests for experiment configuration parsing.
"""

import json

import numpy as np
import pytest

from src.errors import ConfigInvalid, IoError
from src.harness.config import (
    DEFAULT_EPSILONS,
    build_family,
    default_config,
    load_config,
    parse_config,
    target_matrix,
)


def test_defaults():
    """An ssq config needs only its model."""
    config = parse_config({"model": "ssq"})
    assert config.epsilons == list(DEFAULT_EPSILONS)
    assert config.service_mean == pytest.approx(0.5)
    assert config.family.kind == "two_state"
    assert config.replications == 1
    assert config.threads is None


@pytest.mark.parametrize("data, field", [
    ({"model": "ssq", "epsilons": [0.1, 0.2]}, "strictly decreasing"),
    ({"model": "ssq", "epsilons": [0.6, 0.1]}, "(0, 0.5)"),
    ({"model": "switch", "epsilons": [1.0]}, "(0, 1.0)"),
    ({"model": "ssq", "thetas": [0.5]}, "thetas"),
    ({"model": "ssq", "bogus": 1}, "bogus"),
    ({"model": "queue"}, "model"),
    ({"model": "ssq", "service": {"distribution": {"0": 0.5, "1": 0.6}}}, "service.distribution"),
    ({"model": "ssq", "family": {"target": 0.4}}, "service mean"),
    ({"model": "switch", "rates": {"preset": "custom"}}, "custom preset"),
    ({"model": "switch", "rates": {"preset": "custom", "matrix": [[0.5, 0.4], [0.5, 0.6]]}}, "unit row"),
    ({"model": "switch", "rates": {"matrix": [[0.5, 0.5], [0.5, 0.5]]}}, "custom preset"),
    ({"model": "ssq", "horizon": 50_000}, "horizon 50000"),
    ({"model": "switch", "horizon": 1_000, "burn_in": 500, "n_batches": 100}, "fewer than 800"),
])
def test_invalid_configs(data, field):
    """Each invalid document yields a message naming the problem."""
    with pytest.raises(ConfigInvalid) as excinfo:
        parse_config(data)
    assert any(field in message for message in excinfo.value.messages)


def test_messages_carry_field_paths():
    """Messages start with the dotted path of the offending field."""
    with pytest.raises(ConfigInvalid) as excinfo:
        parse_config({"model": "ssq", "horizon": 0, "family": {"peak": 0}})
    paths = {message.split(":")[0] for message in excinfo.value.messages}
    assert {"horizon", "family.peak"} <= paths


def test_load_config(tmp_path):
    """A JSON file loads into a validated config."""
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"model": "switch", "n": 3, "epsilons": [0.1, 0.05]}))
    config = load_config(path)
    assert config.n == 3
    assert config.epsilons == [0.1, 0.05]


def test_load_config_errors(tmp_path):
    """Unreadable files raise IoError; bad JSON and non-objects raise ConfigInvalid."""
    with pytest.raises(IoError):
        load_config(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigInvalid):
        load_config(broken)
    listing = tmp_path / "list.json"
    listing.write_text("[1, 2]")
    with pytest.raises(ConfigInvalid):
        load_config(listing)


@pytest.mark.parametrize("model", ["ssq", "switch"])
def test_default_config_round_trips(model):
    """--print-config output parses back into the same model."""
    data = default_config(model)
    assert data["model"] == model
    json.dumps(data)
    assert parse_config(data).model == model


def test_target_matrix():
    """Uniform, random and custom presets give doubly stochastic matrices of size n."""
    uniform = target_matrix(parse_config({"model": "switch", "n": 3}))
    assert np.allclose(uniform, 1.0 / 3.0)
    random_v = target_matrix(parse_config({"model": "switch", "n": 3, "rates": {"preset": "random", "seed": 4}}))
    assert np.allclose(random_v.sum(axis=0), 1.0) and np.allclose(random_v.sum(axis=1), 1.0)
    custom = parse_config({"model": "switch", "n": 3, "rates": {"preset": "custom", "matrix": [[0.5, 0.5], [0.5, 0.5]]}})
    with pytest.raises(ConfigInvalid):
        target_matrix(custom)


def test_build_family():
    """ssq configs build scalar families, switch configs matrix families."""
    scalar = build_family(parse_config({"model": "ssq"}))
    assert not scalar.is_matrix
    assert float(scalar.target_rate) == pytest.approx(0.5)

    matrix = build_family(parse_config({"model": "switch", "n": 3, "family": {"kind": "iid"}}))
    assert matrix.is_matrix and matrix.n == 3

    with pytest.raises(ConfigInvalid):
        build_family(parse_config({"model": "ssq", "family": {"burstiness": [[0.1]]}}))
    with pytest.raises(ConfigInvalid):
        build_family(parse_config({"model": "ssq", "family": {"peak": 2},
                                   "service": {"distribution": {"2": 1.0}}, "epsilons": [0.5]}))


if __name__ == "__main__":
    pytest.main(["-xvs", __file__])
