"""Decision simulation of one LV/TV interaction along pre-planned paths."""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .game import (
    LV_ACTIONS,
    TV_ACTIONS,
    ActionSet,
    NormalizationConstants,
    PlayerRole,
    VehicleState,
    build_game_matrix,
    scalarize,
)
from .metrics import ConflictZone, FuelTable, OrientedRectangle, compute_pet, detect_collision
from .params import ModelParameters, initial_parameters
from .qre import pure_ne_cells, select_ne_cell, solve_qre_arrays
from .scenario import Layout, Scenario, build_layout

log = logging.getLogger(__name__)


class Mode(str, enum.Enum):
    QRE = "qre"
    QRE0 = "qre0"
    NE = "ne"


class PreconditionError(ValueError):
    """Scenario violates the simulation contract (e.g. vehicle already past the conflict)."""


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.1
    k: float = 0.1
    d0: float = 1.0
    v_max: float = 20.0
    horizon: float = 1.0
    vehicle_length: float = 4.5
    vehicle_width: float = 1.8
    exit_leg: float = 20.0
    mode: Mode = Mode.QRE
    qre_tol: float = 1e-8
    qre_max_iter: int = 200
    t_max: float = 60.0

    def __post_init__(self):
        if self.dt <= 0 or self.v_max <= 0:
            raise ValueError("dt and v_max must be positive")
        object.__setattr__(self, "mode", Mode(self.mode))


def rationality_weight(d_conf: float, k: float = 0.1, d0: float = 1.0) -> float:
    """Weight of the most likely action in the blended acceleration."""
    if d_conf > d0:
        return math.exp(-k * (d_conf - d0))
    return 1.0


def blended_acceleration(strategy, actions: ActionSet, alpha: float) -> float:
    p = np.asarray(strategy, dtype=float)
    acc = actions.array
    # np.argmax keeps the first maximum, i.e. the lower acceleration on ties
    return float(alpha * acc[int(np.argmax(p))] + (1.0 - alpha) * float(acc @ p))


def advance(speed: float, accel: float, dt: float, v_max: float) -> tuple[float, float]:
    """Speed after ``dt`` and distance travelled, with speed clamped to ``[0, v_max]``.

    When a bound is hit inside the step, the remainder of the step is
    integrated at the bound.
    """
    end = speed + accel * dt
    if end > v_max and accel > 0:
        t_hit = max((v_max - speed) / accel, 0.0)
        travel = speed * t_hit + 0.5 * accel * t_hit * t_hit + v_max * (dt - t_hit)
        return v_max, travel
    if end < 0.0 and accel < 0:
        t_hit = speed / -accel
        return 0.0, speed * t_hit + 0.5 * accel * t_hit * t_hit
    if end > v_max:
        end = v_max
    return end, speed * dt + 0.5 * accel * dt * dt


def step_kinematics(state: VehicleState, accel: float, dt: float, v_max: float = 20.0) -> VehicleState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    speed, travel = advance(state.speed, accel, dt, v_max)
    return VehicleState(speed, state.dist_to_conflict - travel, state.dist_to_destination - travel, state.role)


@dataclass
class VehicleTrace:
    t: list = field(default_factory=list)
    s: list = field(default_factory=list)
    d_conf: list = field(default_factory=list)
    speed: list = field(default_factory=list)
    accel: list = field(default_factory=list)
    travel: list = field(default_factory=list)
    probs: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "t": self.t, "d_conf": self.d_conf, "speed": self.speed,
            "accel": self.accel, "probs": self.probs,
        }


@dataclass
class SimulationResult:
    completion_time: float | None
    pet: float | None
    fuel_total: float
    collided: bool
    first_to_conflict: PlayerRole | None
    arrival: dict
    lv: VehicleTrace
    tv: VehicleTrace
    decisions: list
    qre_nonconverged: int = 0
    timed_out: bool = False

    @property
    def flagged(self) -> bool:
        return self.qre_nonconverged > 0

    def to_dict(self) -> dict:
        return {
            "completion_time": self.completion_time,
            "pet": self.pet,
            "fuel_total": self.fuel_total,
            "collided": self.collided,
            "first_to_conflict": None if self.first_to_conflict is None else self.first_to_conflict.value,
            "arrival": self.arrival,
            "qre_nonconverged": self.qre_nonconverged,
            "timed_out": self.timed_out,
            "trajectories": {"LV": self.lv.as_dict(), "TV": self.tv.as_dict()},
            "decision_steps": self.decisions,
        }


def vehicle_rectangle(layout_path, s_head: float, length: float, width: float) -> OrientedRectangle:
    sc = s_head - 0.5 * length
    x, y = layout_path.point(sc)
    return OrientedRectangle(x, y, layout_path.heading(sc), length, width)


class DecisionModel:
    """Maps the current pair of states to (LV accel, TV accel, p_lv, p_tv)."""

    def __init__(self, params: ModelParameters, config: SimConfig):
        self.config = config
        self.norms: NormalizationConstants = params.normalization
        if config.mode is Mode.QRE0:
            lam = params.lam(PlayerRole.LV)
            params = initial_parameters(params.normalization, lam.bin_width, lam.max_distance)
        self.params = params
        self.w_lv = params.w(PlayerRole.LV)
        self.w_tv = params.w(PlayerRole.TV)
        self.p_lv = None
        self.p_tv = None
        self.nonconverged = 0

    def decide(self, lv: VehicleState, tv: VehicleState):
        cfg = self.config
        game = build_game_matrix(lv, tv, cfg.horizon, self.norms)
        u_lv = scalarize(game.lv_components, self.w_lv)
        u_tv = scalarize(game.tv_components, self.w_tv)
        if cfg.mode is Mode.NE:
            i, j = select_ne_cell(pure_ne_cells(u_lv, u_tv), u_lv, u_tv)
            p_lv = np.zeros(len(LV_ACTIONS))
            p_tv = np.zeros(len(TV_ACTIONS))
            p_lv[i] = 1.0
            p_tv[j] = 1.0
            return LV_ACTIONS[i], TV_ACTIONS[j], p_lv, p_tv
        prof_lv = self.params.lam(PlayerRole.LV)
        prof_tv = self.params.lam(PlayerRole.TV)
        lam_lv = prof_lv.values[prof_lv.bin_index(lv.dist_to_conflict)]
        lam_tv = prof_tv.values[prof_tv.bin_index(tv.dist_to_conflict)]
        p_lv, p_tv, _, _, conv = solve_qre_arrays(
            u_lv, u_tv, lam_lv, lam_tv, self.p_lv, self.p_tv, cfg.qre_tol, cfg.qre_max_iter
        )
        if not conv:
            self.nonconverged += 1
        self.p_lv, self.p_tv = p_lv, p_tv
        a_lv = blended_acceleration(p_lv, LV_ACTIONS, rationality_weight(lv.dist_to_conflict, cfg.k, cfg.d0))
        a_tv = blended_acceleration(p_tv, TV_ACTIONS, rationality_weight(tv.dist_to_conflict, cfg.k, cfg.d0))
        return a_lv, a_tv, p_lv, p_tv


def initial_positions(scenario: Scenario, layout: Layout) -> tuple[float, float]:
    if scenario.lv_dist <= 0 or scenario.tv_dist <= 0:
        raise PreconditionError("both vehicles must start before the conflict point")
    if scenario.lv_speed < 0 or scenario.tv_speed < 0:
        raise PreconditionError("initial speeds must be non-negative")
    return layout.lv_conflict_s - scenario.lv_dist, layout.tv_conflict_s - scenario.tv_dist


def run_episode(
    scenario: Scenario,
    params: ModelParameters,
    config: SimConfig = SimConfig(),
    fuel_table: FuelTable | None = None,
) -> SimulationResult:
    """Simulate one interaction until both vehicles reach their destinations.

    While both heads are before the conflict point, both accelerations come
    from the decision model every ``dt``.  Afterwards each vehicle applies
    its largest action (held at ``v_max``).  A collision ends the episode.
    """
    cfg = config
    layout = build_layout(scenario.geometry)
    s_lv, s_tv = initial_positions(scenario, layout)
    v = {PlayerRole.LV: float(scenario.lv_speed), PlayerRole.TV: float(scenario.tv_speed)}
    s = {PlayerRole.LV: s_lv, PlayerRole.TV: s_tv}
    s_conf = {PlayerRole.LV: layout.lv_conflict_s, PlayerRole.TV: layout.tv_conflict_s}
    path = {PlayerRole.LV: layout.lv_path, PlayerRole.TV: layout.tv_path}
    max_action = {PlayerRole.LV: LV_ACTIONS.max, PlayerRole.TV: TV_ACTIONS.max}
    trace = {PlayerRole.LV: VehicleTrace(), PlayerRole.TV: VehicleTrace()}
    arrival = {PlayerRole.LV: None, PlayerRole.TV: None}
    model = DecisionModel(params, cfg)
    table = fuel_table or FuelTable.default()
    fuel = 0.0
    decisions = []
    first = None
    collided = False
    n_steps = int(round(cfg.t_max / cfg.dt))
    L, W = cfg.vehicle_length, cfg.vehicle_width

    def d_conf(r):
        return s_conf[r] - s[r]

    def collides():
        if arrival[PlayerRole.LV] is not None or arrival[PlayerRole.TV] is not None:
            return False
        return detect_collision(
            vehicle_rectangle(path[PlayerRole.LV], s[PlayerRole.LV], L, W),
            vehicle_rectangle(path[PlayerRole.TV], s[PlayerRole.TV], L, W),
        )

    def record(r, t, a, travel, p):
        tr = trace[r]
        tr.t.append(t)
        tr.s.append(s[r])
        tr.d_conf.append(d_conf(r))
        tr.speed.append(v[r])
        tr.accel.append(a)
        tr.travel.append(travel)
        tr.probs.append(None if p is None else [float(x) for x in p])

    collided = collides()
    last_t = {PlayerRole.LV: 0.0, PlayerRole.TV: 0.0}
    for k in range(n_steps):
        if collided or all(a is not None for a in arrival.values()):
            break
        t = k * cfg.dt
        interacting = d_conf(PlayerRole.LV) > 0 and d_conf(PlayerRole.TV) > 0
        if interacting:
            lv_state = VehicleState(v[PlayerRole.LV], d_conf(PlayerRole.LV),
                                    d_conf(PlayerRole.LV) + cfg.exit_leg, PlayerRole.LV)
            tv_state = VehicleState(v[PlayerRole.TV], d_conf(PlayerRole.TV),
                                    d_conf(PlayerRole.TV) + cfg.exit_leg, PlayerRole.TV)
            a_lv, a_tv, p_lv, p_tv = model.decide(lv_state, tv_state)
            accel = {PlayerRole.LV: a_lv, PlayerRole.TV: a_tv}
            probs = {PlayerRole.LV: p_lv, PlayerRole.TV: p_tv}
            decisions.append(k)
        else:
            accel = dict(max_action)
            probs = {PlayerRole.LV: None, PlayerRole.TV: None}
        for r in PlayerRole:
            if arrival[r] is not None:
                continue
            a = accel[r]
            v_new, travel = advance(v[r], a, cfg.dt, cfg.v_max)
            record(r, t, a, travel, probs[r])
            fuel += table.rate(v[r], a) * cfg.dt
            remaining = d_conf(r) + cfg.exit_leg
            before = d_conf(r)
            v[r] = v_new
            s[r] += travel
            last_t[r] = t + cfg.dt
            if first is None and before > 0 >= d_conf(r):
                first = r
            if travel >= remaining:
                frac = remaining / travel if travel > 0 else 1.0
                arrival[r] = t + frac * cfg.dt
        collided = collides()

    for r in PlayerRole:
        # terminal sample: state after the last executed step
        record(r, last_t[r], None, None, None)
    done = all(a is not None for a in arrival.values())
    completion = max(arrival.values()) if done and not collided else None
    pet = None
    if not collided:
        zone = ConflictZone(layout.lv_conflict_s, layout.tv_conflict_s, 0.5 * W)
        lv_tr, tv_tr = trace[PlayerRole.LV], trace[PlayerRole.TV]
        pet = compute_pet((lv_tr.t, lv_tr.s), (tv_tr.t, tv_tr.s), zone, L, L)
    if model.nonconverged:
        log.debug("QRE did not converge in %d steps", model.nonconverged)
    return SimulationResult(
        completion_time=completion,
        pet=pet,
        fuel_total=fuel,
        collided=collided,
        first_to_conflict=first,
        arrival={r.value: arrival[r] for r in PlayerRole},
        lv=trace[PlayerRole.LV],
        tv=trace[PlayerRole.TV],
        decisions=decisions,
        qre_nonconverged=model.nonconverged,
        timed_out=not done and not collided,
    )
