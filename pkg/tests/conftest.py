import numpy as np
import pytest

from leftturn.game import NormalizationConstants, PlayerRole, RoleNorms, VehicleState


@pytest.fixture
def unit_norms():
    return NormalizationConstants(RoleNorms(0.0, 1.0, -1.0, 0.0), RoleNorms(0.0, 1.0, -1.0, 0.0))


def vs(speed, d, role=PlayerRole.LV, exit_leg=20.0):
    return VehicleState(speed, d, d + exit_leg, role)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
