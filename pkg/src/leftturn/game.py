"""Players, payoff components and the LV/TV normal-form game.

Index convention everywhere: ``(i, j)`` is (LV action ``i``, TV action ``j``).
Component tensors have shape ``(3, n_lv, n_tv)`` with component order
``(safety, efficiency, rule)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

V_FLOOR = 0.1
"""Speed floor (m/s) used in every division by speed."""

COMPONENTS = ("safety", "efficiency", "rule")
SAFETY, EFFICIENCY, RULE = 0, 1, 2


class PlayerRole(str, enum.Enum):
    LV = "LV"
    TV = "TV"

    @property
    def other(self) -> "PlayerRole":
        return PlayerRole.TV if self is PlayerRole.LV else PlayerRole.LV


class ConfigurationError(ValueError):
    """Invalid static configuration (degenerate normalization, bad shapes)."""


class DomainError(ValueError):
    """An operation was asked to evaluate outside its domain."""


@dataclass(frozen=True)
class ActionSet:
    accelerations: tuple[float, ...]

    def __post_init__(self):
        acc = tuple(float(a) for a in self.accelerations)
        if len(acc) == 0 or any(b <= a for a, b in zip(acc, acc[1:])):
            raise ConfigurationError(f"action set must be strictly increasing: {acc}")
        object.__setattr__(self, "accelerations", acc)

    def __len__(self) -> int:
        return len(self.accelerations)

    def __iter__(self):
        return iter(self.accelerations)

    def __getitem__(self, i: int) -> float:
        return self.accelerations[i]

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.accelerations)

    @property
    def max(self) -> float:
        return self.accelerations[-1]

    @property
    def min(self) -> float:
        return self.accelerations[0]


LV_ACTIONS = ActionSet((-1.0, 0.0, 1.0))
TV_ACTIONS = ActionSet((-2.0, -1.0, 0.0, 1.0, 2.0))


def action_set(role: PlayerRole) -> ActionSet:
    return LV_ACTIONS if role is PlayerRole.LV else TV_ACTIONS


@dataclass(frozen=True)
class VehicleState:
    """Longitudinal state of one player along its pre-planned path.

    ``dist_to_conflict`` is measured from the vehicle head and becomes
    negative once the head has passed the conflict point.
    """

    speed: float
    dist_to_conflict: float
    dist_to_destination: float
    role: PlayerRole


def ttcp(state: VehicleState) -> float:
    """Time to the conflict point at constant speed."""
    if state.dist_to_conflict < 0:
        raise DomainError(
            f"{state.role.value} already past the conflict point "
            f"(d={state.dist_to_conflict})"
        )
    return state.dist_to_conflict / max(state.speed, V_FLOOR)


def rttc(self_ttcp: float, other_ttcp: float) -> float:
    return abs(self_ttcp - other_ttcp)


def safety_payoff(self: VehicleState, other: VehicleState) -> float:
    own = ttcp(self)
    return own + rttc(own, ttcp(other))


def efficiency_payoff(state: VehicleState) -> float:
    return -state.dist_to_destination / max(state.speed, V_FLOOR)


def rule_payoff(role: PlayerRole) -> float:
    return 0.5 if role is PlayerRole.LV else 1.0


def _travel(speed, accel, horizon):
    """Arc length covered under constant acceleration, stopping at zero speed."""
    speed = np.asarray(speed, dtype=float)
    accel = np.asarray(accel, dtype=float)
    end = speed + accel * horizon
    full = speed * horizon + 0.5 * accel * horizon**2
    with np.errstate(divide="ignore", invalid="ignore"):
        stopped = np.where(accel < 0, speed**2 / (-2.0 * accel), 0.0)
    return np.where(end >= 0, full, stopped), np.maximum(end, 0.0)


def project_state(state: VehicleState, accel: float, horizon: float) -> VehicleState:
    """Constant-acceleration projection of ``state`` over ``horizon`` seconds."""
    if horizon <= 0:
        raise DomainError("projection horizon must be positive")
    travel, speed = _travel(state.speed, accel, horizon)
    travel = float(travel)
    return VehicleState(
        speed=float(speed),
        dist_to_conflict=state.dist_to_conflict - travel,
        dist_to_destination=state.dist_to_destination - travel,
        role=state.role,
    )


@dataclass(frozen=True)
class RoleNorms:
    safety_min: float
    safety_max: float
    efficiency_min: float
    efficiency_max: float

    def __post_init__(self):
        if not (self.safety_max > self.safety_min and self.efficiency_max > self.efficiency_min):
            raise ConfigurationError(f"degenerate normalization bounds: {self}")


@dataclass(frozen=True)
class NormalizationConstants:
    """Min-max bounds of the safety and efficiency components per role."""

    lv: RoleNorms
    tv: RoleNorms

    def for_role(self, role: PlayerRole) -> RoleNorms:
        return self.lv if role is PlayerRole.LV else self.tv

    @classmethod
    def fit(cls, lv_raw: np.ndarray, tv_raw: np.ndarray, quantiles=(0.0, 1.0)):
        """Fit bounds from stacked raw component tensors ``(N, 3, 3, 5)``.

        ``quantiles`` other than ``(0, 1)`` give trimmed bounds; values
        outside are clipped when the constants are applied.
        """
        lo, hi = quantiles

        def role(raw):
            raw = np.asarray(raw)
            s = raw[..., SAFETY, :, :].ravel()
            e = raw[..., EFFICIENCY, :, :].ravel()
            try:
                return RoleNorms(
                    float(np.quantile(s, lo)), float(np.quantile(s, hi)),
                    float(np.quantile(e, lo)), float(np.quantile(e, hi)),
                )
            except ConfigurationError as exc:
                raise ConfigurationError(f"cannot fit normalization: {exc}") from None

        return cls(role(lv_raw), role(tv_raw))

    def apply(self, raw: np.ndarray, role: PlayerRole) -> np.ndarray:
        """Min-max scale safety/efficiency of ``raw`` (..., 3, n_lv, n_tv), clipped to [0, 1]."""
        n = self.for_role(role)
        out = np.array(raw, dtype=float, copy=True)
        s = out[..., SAFETY, :, :]
        e = out[..., EFFICIENCY, :, :]
        s[...] = np.clip((s - n.safety_min) / (n.safety_max - n.safety_min), 0.0, 1.0)
        e[...] = np.clip((e - n.efficiency_min) / (n.efficiency_max - n.efficiency_min), 0.0, 1.0)
        return out

    def to_dict(self) -> dict:
        return {r: vars(self.for_role(PlayerRole(r))).copy() for r in ("LV", "TV")}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationConstants":
        return cls(RoleNorms(**d["LV"]), RoleNorms(**d["TV"]))


@dataclass(frozen=True)
class GameMatrix:
    lv_components: np.ndarray
    tv_components: np.ndarray
    lv_actions: ActionSet = LV_ACTIONS
    tv_actions: ActionSet = TV_ACTIONS

    def components(self, role: PlayerRole) -> np.ndarray:
        return self.lv_components if role is PlayerRole.LV else self.tv_components

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.lv_actions), len(self.tv_actions)


def raw_components(
    lv: VehicleState,
    tv: VehicleState,
    horizon: float = 1.0,
    lv_actions: ActionSet = LV_ACTIONS,
    tv_actions: ActionSet = TV_ACTIONS,
) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized payoff components for every joint action.

    Both states are projected over ``horizon`` under each candidate action.
    A projection that overshoots the conflict point is evaluated at it, i.e.
    its time to the conflict point is zero.
    """
    if lv.dist_to_conflict < 0 or tv.dist_to_conflict < 0:
        raise DomainError("both vehicles must be before the conflict point")
    if horizon <= 0:
        raise DomainError("projection horizon must be positive")
    travel_lv, v_lv = _travel(lv.speed, lv_actions.array, horizon)
    travel_tv, v_tv = _travel(tv.speed, tv_actions.array, horizon)
    v_lv = np.maximum(v_lv, V_FLOOR)
    v_tv = np.maximum(v_tv, V_FLOOR)
    t_lv = np.maximum(lv.dist_to_conflict - travel_lv, 0.0) / v_lv
    t_tv = np.maximum(tv.dist_to_conflict - travel_tv, 0.0) / v_tv
    e_lv = -np.maximum(lv.dist_to_destination - travel_lv, 0.0) / v_lv
    e_tv = -np.maximum(tv.dist_to_destination - travel_tv, 0.0) / v_tv

    gap = np.abs(t_lv[:, None] - t_tv[None, :])
    shape = (3, len(lv_actions), len(tv_actions))
    lv_raw = np.empty(shape)
    tv_raw = np.empty(shape)
    lv_raw[SAFETY] = t_lv[:, None] + gap
    tv_raw[SAFETY] = t_tv[None, :] + gap
    lv_raw[EFFICIENCY] = e_lv[:, None]
    tv_raw[EFFICIENCY] = e_tv[None, :]
    lv_raw[RULE] = rule_payoff(PlayerRole.LV)
    tv_raw[RULE] = rule_payoff(PlayerRole.TV)
    return lv_raw, tv_raw


def build_game_matrix(
    lv: VehicleState,
    tv: VehicleState,
    horizon: float,
    norms: NormalizationConstants,
    lv_actions: ActionSet = LV_ACTIONS,
    tv_actions: ActionSet = TV_ACTIONS,
) -> GameMatrix:
    lv_raw, tv_raw = raw_components(lv, tv, horizon, lv_actions, tv_actions)
    return GameMatrix(
        norms.apply(lv_raw, PlayerRole.LV),
        norms.apply(tv_raw, PlayerRole.TV),
        lv_actions,
        tv_actions,
    )


def scalarize(components: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted sum over the component axis: ``sum_c w[c] * J[c]``."""
    if components.shape[-3:] != weights.shape[-3:]:
        raise ConfigurationError(
            f"weights {weights.shape} do not match components {components.shape}"
        )
    return np.einsum("...cij,...cij->...ij", components, weights)


def kmh_to_ms(v_kmh: float) -> float:
    return v_kmh / 3.6
