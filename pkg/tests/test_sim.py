import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from leftturn.game import LV_ACTIONS, TV_ACTIONS, PlayerRole
from leftturn.params import reference_parameters
from leftturn.scenario import CASE_STUDIES, Scenario, sample_scenario
from leftturn.sim import (
    Mode,
    PreconditionError,
    SimConfig,
    advance,
    blended_acceleration,
    rationality_weight,
    run_episode,
    step_kinematics,
)

from conftest import vs


@pytest.fixture(scope="module")
def ref():
    return reference_parameters()


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(dt=0)
    with pytest.raises(ValueError):
        SimConfig(v_max=-1)
    assert SimConfig(mode="ne").mode is Mode.NE


def test_rationality_weight_examples():
    assert rationality_weight(1.0) == 1.0
    assert rationality_weight(11.0, 0.1, 1.0) == pytest.approx(math.exp(-1))
    assert rationality_weight(0.5) == 1.0


@given(st.floats(-5, 200), st.floats(0, 50))
def test_alpha_properties(d, extra):
    a = rationality_weight(d)
    assert 0 < a <= 1 or (a == 0 and d > 700)
    if d > 1.0:
        assert rationality_weight(d + extra) <= a


def test_blend_examples():
    assert blended_acceleration([0, 1, 0], LV_ACTIONS, 0.3) == 0.0
    assert blended_acceleration(np.full(3, 1 / 3), LV_ACTIONS, 0.0) == pytest.approx(0.0)
    assert blended_acceleration([0.2, 0.3, 0.5], LV_ACTIONS, 0.4) == pytest.approx(0.58)
    # ties break toward the lower acceleration
    assert blended_acceleration([0.5, 0.0, 0.5], LV_ACTIONS, 1.0) == -1.0


@given(st.lists(st.floats(0, 1), min_size=5, max_size=5).filter(lambda p: sum(p) > 0), st.floats(0, 1))
def test_blend_within_action_range(p, alpha):
    p = np.asarray(p) / sum(p)
    a = blended_acceleration(p, TV_ACTIONS, alpha)
    assert TV_ACTIONS.min - 1e-12 <= a <= TV_ACTIONS.max + 1e-12


def test_kinematics_examples():
    s = step_kinematics(vs(10, 30), 0.0, 0.1)
    assert (s.speed, 30 - s.dist_to_conflict) == pytest.approx((10, 1.0))
    s = step_kinematics(vs(10, 30), 1.0, 0.1)
    assert s.speed == pytest.approx(10.1) and 30 - s.dist_to_conflict == pytest.approx(1.005)
    v, travel = advance(19.99, 2.0, 0.1, 20.0)
    t_star = 0.005
    assert v == 20.0
    assert travel == pytest.approx(19.99 * t_star + 0.5 * 2 * t_star**2 + 20 * (0.1 - t_star), abs=1e-12)
    v, travel = advance(0.05, -1.0, 0.1, 20.0)
    assert v == 0.0 and travel == pytest.approx(0.05**2 / 2)
    with pytest.raises(ValueError):
        step_kinematics(vs(1, 1), 0.0, 0.0)


@given(st.floats(0, 20), st.floats(-2, 2))
def test_advance_bounds(v, a):
    v2, travel = advance(v, a, 0.1, 20.0)
    assert 0 <= v2 <= 20 and travel >= 0
    assert travel <= 20 * 0.1 + 1e-12


def test_precondition(ref):
    with pytest.raises(PreconditionError):
        run_episode(Scenario(5.0, 10.0, 5.0, -2.0), ref)
    with pytest.raises(PreconditionError):
        run_episode(Scenario(5.0, 0.0, 5.0, 10.0), ref)


def test_case_inputs():
    c1, c2 = CASE_STUDIES["table3-case1"], CASE_STUDIES["table3-case2"]
    assert (c1.lv_speed, c1.lv_dist, c1.tv_speed, c1.tv_dist) == pytest.approx((3.0, 23.51, 3.0, 22.56))
    assert (c2.lv_speed, c2.lv_dist, c2.tv_speed, c2.tv_dist) == pytest.approx((4.0, 15.50, 8.0, 33.72))


@pytest.mark.parametrize("mode", [Mode.QRE, Mode.NE])
@pytest.mark.parametrize("name", sorted(CASE_STUDIES))
def test_case_studies(ref, mode, name):
    r = run_episode(CASE_STUDIES[name], ref, SimConfig(mode=mode))
    assert not r.collided
    assert r.completion_time is not None and math.isfinite(r.completion_time)
    assert r.pet is not None and r.pet > 0
    if name == "table3-case2":
        assert r.first_to_conflict is PlayerRole.LV


def _check_invariants(r, cfg):
    for tr, actions in ((r.lv, LV_ACTIONS), (r.tv, TV_ACTIONS)):
        assert all(0 <= v <= cfg.v_max for v in tr.speed)
        for v, a, travel in zip(tr.speed, tr.accel, tr.travel):
            if a is None:
                continue
            assert actions.min <= a <= actions.max
            assert abs(advance(v, a, cfg.dt, cfg.v_max)[1] - travel) <= 1e-12
        s = np.asarray(tr.s)
        assert np.all(np.diff(s) >= 0)
    # the decision model only runs while both heads are before the conflict point
    n = min(len(r.lv.probs), len(r.tv.probs))
    for k in range(n):
        if r.lv.probs[k] is not None or r.tv.probs[k] is not None:
            assert r.lv.d_conf[k] > 0 and r.tv.d_conf[k] > 0
    if not r.collided and r.pet is not None:
        assert r.pet >= 0
    if r.collided:
        assert r.pet is None and r.completion_time is None


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(list(Mode)))
def test_episode_invariants(ref, seed, mode):
    sc = sample_scenario(np.random.default_rng(seed))
    cfg = SimConfig(mode=mode)
    r = run_episode(sc, ref, cfg)
    _check_invariants(r, cfg)
    assert r.to_dict() == run_episode(sc, ref, cfg).to_dict()


def test_post_pass_max_action(ref):
    r = run_episode(CASE_STUDIES["table3-case2"], ref)
    k_pass = next(k for k, d in enumerate(r.lv.d_conf) if d <= 0)
    tail = [a for a in r.lv.accel[k_pass:] if a is not None]
    assert tail and all(a == LV_ACTIONS.max for a in tail)
    n = min(len(r.tv.accel), len(r.lv.accel))
    tv_tail = [a for a in r.tv.accel[k_pass:n] if a is not None]
    assert all(a == TV_ACTIONS.max for a in tv_tail)


def test_collision_terminates(ref):
    # both vehicles already overlapping the conflict area
    r = run_episode(Scenario(8.0, 0.5, 8.0, 0.5), ref)
    assert r.collided and r.pet is None and r.completion_time is None
    assert len(r.lv.t) <= 2


def test_result_serializable(ref):
    import json
    r = run_episode(CASE_STUDIES["table3-case1"], ref, SimConfig(mode=Mode.NE))
    d = json.loads(json.dumps(r.to_dict()))
    assert d["collided"] is False and d["first_to_conflict"] in ("LV", "TV")
    assert len(d["trajectories"]["LV"]["t"]) == len(d["trajectories"]["LV"]["speed"])
