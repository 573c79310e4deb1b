import json
import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from leftturn.game import ConfigurationError, NormalizationConstants, PlayerRole, RoleNorms
from leftturn.params import (
    ModelParameters,
    check_weights,
    generator_parameters,
    initial_parameters,
    reference_parameters,
)
from leftturn.qre import RationalityProfile


def random_params(rng, norms):
    p = initial_parameters(norms)
    for role in PlayerRole:
        w = rng.uniform(0.01, 1, size=(3, 3, 5))
        p.weights[role] = w / w.sum(axis=0)
        p.rationality[role] = RationalityProfile(rng.uniform(0, 10, size=20))
    p.metadata = {"seed": 3}
    return p


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_roundtrip_bitwise(seed):
    rng = np.random.default_rng(seed)
    lo, hi = np.sort(rng.normal(size=2))
    norms = NormalizationConstants(RoleNorms(lo, hi + 1e-3, -3.0, -1.0), RoleNorms(0.0, 2.0, -5.0, 0.5))
    p = random_params(rng, norms)
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "params.json"
        p.save(path)
        q = ModelParameters.load(path)
    for role in PlayerRole:
        assert np.array_equal(p.w(role), q.w(role))
        assert np.array_equal(p.lam(role).values, q.lam(role).values)
    assert q.normalization == p.normalization
    assert q.dumps() == p.dumps()


def test_initial_parameters(unit_norms):
    p = initial_parameters(unit_norms)
    p.validate()
    assert np.all(p.w(PlayerRole.LV)[:, 1, 3] == [0.5, 0.3, 0.2])
    assert np.all(p.lam(PlayerRole.TV).values == 2.0)


def test_bad_files(unit_norms):
    d = initial_parameters(unit_norms).to_dict()
    with pytest.raises(ConfigurationError):
        ModelParameters.from_dict({**d, "format_version": 99})
    bad = json.loads(json.dumps(d))
    bad["weights"]["LV"] = [[0.0]]
    with pytest.raises(ConfigurationError):
        ModelParameters.from_dict(bad)


def test_check_weights():
    with pytest.raises(ConfigurationError):
        check_weights(np.ones((3, 3, 5)))
    with pytest.raises(ConfigurationError):
        check_weights(np.ones((3, 5, 3)) / 3)


@pytest.mark.parametrize("loader", [reference_parameters, generator_parameters])
def test_bundled_parameters_valid(loader):
    p = loader()
    p.validate()
    assert p.lam(PlayerRole.LV).n_bins == 20
