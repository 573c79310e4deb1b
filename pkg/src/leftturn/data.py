"""Trajectory ingestion, action labeling and the synthetic interaction generator.

Episode CSV (header required)::

    episode_id,role,t,x,y,speed

one row per vehicle per timestamp; ``x, y`` is the vehicle head.  Frames
CSV::

    episode_id,frame_id,role,dist_conflict,dist_dest,speed,label

two rows (LV, TV) per decision frame.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .game import LV_ACTIONS, TV_ACTIONS, ActionSet, PlayerRole, VehicleState, build_game_matrix, scalarize
from .params import ModelParameters
from .paths import PathError, PathModel, fit_path, intersect_paths
from .qre import solve_qre_arrays
from .scenario import IntersectionGeometry, Scenario, build_layout, sample_scenario
from .sim import SimConfig, advance, initial_positions

log = logging.getLogger(__name__)

EPISODE_FIELDS = ["episode_id", "role", "t", "x", "y", "speed"]
FRAME_FIELDS = ["episode_id", "frame_id", "role", "dist_conflict", "dist_dest", "speed", "label"]


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class DecisionFrame:
    lv_state: VehicleState
    tv_state: VehicleState
    lv_label: int
    tv_label: int
    frame_id: int
    episode_id: str = ""
    t: float = 0.0

    def __post_init__(self):
        if not (0 <= self.lv_label < len(LV_ACTIONS) and 0 <= self.tv_label < len(TV_ACTIONS)):
            raise DataError(f"frame {self.frame_id}: label out of range")
        if self.lv_state.dist_to_conflict < 0 or self.tv_state.dist_to_conflict < 0:
            raise DataError(f"frame {self.frame_id}: vehicle past the conflict point")


@dataclass
class Track:
    role: PlayerRole
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    speed: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, float)
        self.x = np.asarray(self.x, float)
        self.y = np.asarray(self.y, float)
        self.speed = np.asarray(self.speed, float)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def heading(self) -> np.ndarray:
        return np.arctan2(np.gradient(self.y), np.gradient(self.x)) if len(self) > 1 else np.zeros(len(self))

    def position_at(self, t: float) -> tuple[float, float]:
        return float(np.interp(t, self.t, self.x)), float(np.interp(t, self.t, self.y))

    def speed_at(self, t: float) -> float:
        return float(np.interp(t, self.t, self.speed))


@dataclass
class InteractionEpisode:
    episode_id: str
    lv_track: Track
    tv_track: Track
    lv_path: PathModel
    tv_path: PathModel
    conflict_point: tuple[float, float]
    lv_conflict_s: float
    tv_conflict_s: float
    frames: list[DecisionFrame] = field(default_factory=list)

    def track(self, role: PlayerRole) -> Track:
        return self.lv_track if role is PlayerRole.LV else self.tv_track


@dataclass(frozen=True)
class DataConfig:
    exit_leg: float = 20.0
    accel_window: int = 5
    frame_min_dist: float = 0.0
    frame_max_dist: float = 40.0
    frame_stride: int = 1


# ---------------------------------------------------------------- labeling

def derive_acceleration(t, speed, window: int = 5) -> np.ndarray:
    """Acceleration from speed: central differences, then a centred moving average.

    Near the ends the averaging window shrinks to the available samples.
    """
    t = np.asarray(t, float)
    v = np.asarray(speed, float)
    if len(t) < 2:
        raise DataError("need at least two samples to derive acceleration")
    a = np.empty_like(v)
    # difference quotients keep constant speed exactly zero and ramps exact
    a[0] = (v[1] - v[0]) / (t[1] - t[0])
    a[-1] = (v[-1] - v[-2]) / (t[-1] - t[-2])
    a[1:-1] = (v[2:] - v[:-2]) / (t[2:] - t[:-2])
    if window <= 1:
        return a
    half = window // 2
    csum = np.concatenate([[0.0], np.cumsum(a)])
    idx = np.arange(len(a))
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, len(a))
    return (csum[hi] - csum[lo]) / (hi - lo)


def label_actions(accel: float, actions: ActionSet) -> int:
    """Index of the nearest action; exact midpoints go to the smaller magnitude."""
    best = None
    for i, a in enumerate(actions):
        key = (abs(accel - a), abs(a))
        if best is None or key < best[0]:
            best = (key, i)
    return best[1]


# ---------------------------------------------------------------- CSV I/O

def _parse_rows(path):
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return rows
        if [h.strip() for h in header] != EPISODE_FIELDS:
            raise DataError(f"{path}: line 1: expected header {','.join(EPISODE_FIELDS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(EPISODE_FIELDS):
                raise DataError(f"{path}: line {lineno}: expected {len(EPISODE_FIELDS)} fields, got {len(row)}")
            eid, role = row[0], row[1].strip()
            try:
                role = PlayerRole(role)
                t, x, y, v = (float(c) for c in row[2:])
            except ValueError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from None
            if not all(math.isfinite(c) for c in (t, x, y, v)):
                raise DataError(f"{path}: line {lineno}: non-finite value")
            rows.setdefault(eid, {}).setdefault(role, []).append((t, x, y, v))
    return rows


def read_tracks(path) -> dict[str, dict[PlayerRole, Track]]:
    """Parse the episode CSV into tracks, checking timestamp order."""
    out = {}
    for eid, by_role in _parse_rows(path).items():
        if set(by_role) != {PlayerRole.LV, PlayerRole.TV}:
            raise DataError(f"episode {eid}: needs exactly one LV and one TV track")
        out[eid] = {}
        for role, pts in by_role.items():
            arr = np.array(pts)
            if np.any(np.diff(arr[:, 0]) <= 0):
                raise DataError(f"episode {eid}: {role.value} timestamps are not strictly increasing")
            out[eid][role] = Track(role, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])
    return out


def build_episode(eid: str, lv: Track, tv: Track, config: DataConfig = DataConfig()) -> InteractionEpisode:
    try:
        lv_path = fit_path(np.column_stack([lv.x, lv.y]))
        tv_path = fit_path(np.column_stack([tv.x, tv.y]))
    except PathError as exc:
        raise DataError(f"episode {eid}: {exc}") from None
    hit = intersect_paths(lv_path, tv_path)
    if hit is None:
        raise DataError(f"episode {eid}: paths do not intersect")
    point, s_lv, s_tv = hit
    ep = InteractionEpisode(eid, lv, tv, lv_path, tv_path, point, s_lv, s_tv)
    ep.frames = extract_frames(ep, config)
    return ep


def load_episodes(path, config: DataConfig = DataConfig()) -> list[InteractionEpisode]:
    """Episodes from an episode CSV.

    Episodes whose fitted paths do not cross are skipped with a warning;
    malformed rows raise :class:`DataError`.
    """
    episodes = []
    for eid, tracks in read_tracks(path).items():
        try:
            episodes.append(build_episode(eid, tracks[PlayerRole.LV], tracks[PlayerRole.TV], config))
        except DataError as exc:
            if "do not intersect" not in str(exc):
                raise
            log.warning("rejected %s", exc)
    return episodes


def _fmt(x: float) -> str:
    return repr(float(x))


def write_episodes_csv(episodes, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EPISODE_FIELDS)
        for ep in episodes:
            for track in (ep.lv_track, ep.tv_track):
                for t, x, y, v in zip(track.t, track.x, track.y, track.speed):
                    w.writerow([ep.episode_id, track.role.value, _fmt(t), _fmt(x), _fmt(y), _fmt(v)])


def write_frames_csv(frames, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FRAME_FIELDS)
        for f in frames:
            for st, label in ((f.lv_state, f.lv_label), (f.tv_state, f.tv_label)):
                w.writerow([f.episode_id, f.frame_id, st.role.value, _fmt(st.dist_to_conflict),
                            _fmt(st.dist_to_destination), _fmt(st.speed), label])


def load_frames_csv(path) -> list[DecisionFrame]:
    pending = {}
    frames = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return frames
        if [h.strip() for h in header] != FRAME_FIELDS:
            raise DataError(f"{path}: line 1: expected header {','.join(FRAME_FIELDS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(FRAME_FIELDS):
                raise DataError(f"{path}: line {lineno}: expected {len(FRAME_FIELDS)} fields")
            try:
                eid, fid, role = row[0], int(row[1]), PlayerRole(row[2].strip())
                d, dd, v = float(row[3]), float(row[4]), float(row[5])
                label = int(row[6])
            except ValueError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from None
            key = (eid, fid)
            pending.setdefault(key, {})[role] = (VehicleState(v, d, dd, role), label)
            if len(pending[key]) == 2:
                pair = pending.pop(key)
                (lv, ll), (tv, tl) = pair[PlayerRole.LV], pair[PlayerRole.TV]
                frames.append(DecisionFrame(lv, tv, ll, tl, fid, eid))
    if pending:
        eid, fid = next(iter(pending))
        raise DataError(f"{path}: frame {eid}/{fid} is missing one role")
    return frames


def sniff_format(path) -> str:
    """'episodes' or 'frames' depending on the CSV header."""
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), [])
    header = [h.strip() for h in header]
    if header == EPISODE_FIELDS:
        return "episodes"
    if header == FRAME_FIELDS:
        return "frames"
    raise DataError(f"{path}: line 1: unrecognised header")


# ---------------------------------------------------------------- frames

def states_from_tracks(ep: InteractionEpisode, t: float, exit_leg: float = 20.0):
    """Vehicle states at time ``t`` measured along the fitted paths."""
    out = []
    for role, path, s_conf in ((PlayerRole.LV, ep.lv_path, ep.lv_conflict_s),
                               (PlayerRole.TV, ep.tv_path, ep.tv_conflict_s)):
        tr = ep.track(role)
        if not (tr.t[0] <= t <= tr.t[-1]):
            raise DataError(f"episode {ep.episode_id}: t={t} outside the {role.value} track")
        x, y = tr.position_at(t)
        d = s_conf - path.project(x, y)
        out.append(VehicleState(tr.speed_at(t), d, d + exit_leg, role))
    return tuple(out)


def extract_frames(ep: InteractionEpisode, config: DataConfig = DataConfig()) -> list[DecisionFrame]:
    """Labelled frames at the LV timestamps where both vehicles are inside the frame filter."""
    acc_lv = derive_acceleration(ep.lv_track.t, ep.lv_track.speed, config.accel_window)
    acc_tv = derive_acceleration(ep.tv_track.t, ep.tv_track.speed, config.accel_window)
    t_tv = ep.tv_track.t
    frames = []
    for k in range(0, len(ep.lv_track), config.frame_stride):
        t = float(ep.lv_track.t[k])
        if not (t_tv[0] <= t <= t_tv[-1]):
            continue
        lv, tv = states_from_tracks(ep, t, config.exit_leg)
        if not all(config.frame_min_dist <= s.dist_to_conflict <= config.frame_max_dist for s in (lv, tv)):
            continue
        a_tv = float(np.interp(t, t_tv, acc_tv))
        frames.append(DecisionFrame(lv, tv, label_actions(acc_lv[k], LV_ACTIONS),
                                    label_actions(a_tv, TV_ACTIONS), len(frames), ep.episode_id, t))
    return frames


# ---------------------------------------------------------------- synthetic data

@dataclass(frozen=True)
class SyntheticConfig:
    sim: SimConfig = SimConfig()
    geometry: IntersectionGeometry = IntersectionGeometry()
    frame_max_dist: float = 40.0
    speed_kmh: tuple[float, float] = (10.0, 36.0)
    dist_m: tuple[float, float] = (10.0, 40.0)


def episode_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


def sample_labels(p_lv, p_tv, rng: np.random.Generator) -> tuple[int, int]:
    """Draw one LV and one TV action index from the two mixed strategies."""
    i = int(rng.choice(len(p_lv), p=p_lv))
    j = int(rng.choice(len(p_tv), p=p_tv))
    return i, j


def rollout_synthetic(
    params: ModelParameters,
    scenario: Scenario,
    rng: np.random.Generator,
    episode_id: str,
    config: SyntheticConfig = SyntheticConfig(),
) -> InteractionEpisode:
    """Roll out one episode where both drivers play actions sampled from the QRE.

    Each ``dt`` the per-frame QRE is solved under ``params``; the sampled
    action is both the frame label and the applied acceleration.  Once a
    vehicle passes the conflict point both apply their largest action.
    """
    cfg = config.sim
    layout = build_layout(scenario.geometry)
    s0 = initial_positions(scenario, layout)
    roles = (PlayerRole.LV, PlayerRole.TV)
    s = dict(zip(roles, s0))
    v = {PlayerRole.LV: scenario.lv_speed, PlayerRole.TV: scenario.tv_speed}
    s_conf = {PlayerRole.LV: layout.lv_conflict_s, PlayerRole.TV: layout.tv_conflict_s}
    path = {PlayerRole.LV: layout.lv_path, PlayerRole.TV: layout.tv_path}
    actions = {PlayerRole.LV: LV_ACTIONS, PlayerRole.TV: TV_ACTIONS}
    rows = {r: [] for r in roles}
    arrived = {r: False for r in roles}
    frames = []
    p_lv = p_tv = None
    w_lv, w_tv = params.w(PlayerRole.LV), params.w(PlayerRole.TV)
    prof_lv, prof_tv = params.lam(PlayerRole.LV), params.lam(PlayerRole.TV)
    n_steps = int(round(cfg.t_max / cfg.dt))

    def log_row(r, t):
        x, y = path[r].point(s[r])
        rows[r].append((t, x, y, v[r]))

    for k in range(n_steps + 1):
        t = k * cfg.dt
        for r in roles:
            if not arrived[r]:
                log_row(r, t)
        if all(arrived.values()) or k == n_steps:
            break
        d = {r: s_conf[r] - s[r] for r in roles}
        if d[PlayerRole.LV] > 0 and d[PlayerRole.TV] > 0:
            lv = VehicleState(v[PlayerRole.LV], d[PlayerRole.LV], d[PlayerRole.LV] + cfg.exit_leg, PlayerRole.LV)
            tv = VehicleState(v[PlayerRole.TV], d[PlayerRole.TV], d[PlayerRole.TV] + cfg.exit_leg, PlayerRole.TV)
            game = build_game_matrix(lv, tv, cfg.horizon, params.normalization)
            p_lv, p_tv, *_ = solve_qre_arrays(
                scalarize(game.lv_components, w_lv), scalarize(game.tv_components, w_tv),
                prof_lv.values[prof_lv.bin_index(lv.dist_to_conflict)],
                prof_tv.values[prof_tv.bin_index(tv.dist_to_conflict)],
                p_lv, p_tv, cfg.qre_tol, cfg.qre_max_iter,
            )
            i, j = sample_labels(p_lv, p_tv, rng)
            if max(d.values()) <= config.frame_max_dist:
                frames.append(DecisionFrame(lv, tv, i, j, len(frames), episode_id, t))
            accel = {PlayerRole.LV: LV_ACTIONS[i], PlayerRole.TV: TV_ACTIONS[j]}
        else:
            accel = {r: actions[r].max for r in roles}
        for r in roles:
            if arrived[r]:
                continue
            v[r], travel = advance(v[r], accel[r], cfg.dt, cfg.v_max)
            s[r] += travel
            if s_conf[r] - s[r] + cfg.exit_leg <= 0:
                arrived[r] = True
                log_row(r, t + cfg.dt)

    tracks = {r: Track(r, *np.array(rows[r]).T) for r in roles}
    return InteractionEpisode(
        episode_id, tracks[PlayerRole.LV], tracks[PlayerRole.TV], layout.lv_path, layout.tv_path,
        layout.conflict_point, layout.lv_conflict_s, layout.tv_conflict_s, frames,
    )


def generate_synthetic(
    true_params: ModelParameters,
    n_episodes: int,
    seed: int,
    scenario_sampler=None,
    config: SyntheticConfig = SyntheticConfig(),
) -> list[InteractionEpisode]:
    """Synthetic episodes with labels drawn from the QRE under ``true_params``.

    Episode ``k`` uses its own RNG stream keyed by ``(seed, k)`` for both
    the initial conditions and the sampled actions.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    sampler = scenario_sampler or (lambda rng: sample_scenario(rng, config.speed_kmh, config.dist_m))
    episodes = []
    for k in range(n_episodes):
        rng = episode_rng(seed, k)
        scenario = sampler(rng)
        episodes.append(rollout_synthetic(true_params, scenario, rng, f"syn{k:05d}", config))
    return episodes


def all_frames(episodes) -> list[DecisionFrame]:
    return [f for ep in episodes for f in ep.frames]
