"""Intersection geometry and initial conditions of a two-vehicle interaction."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .game import kmh_to_ms
from .paths import PathError, PathModel, fit_path, intersect_paths


@dataclass(frozen=True)
class IntersectionGeometry:
    """Opposing approaches: LV turns left across the TV's straight lane.

    The LV drives north in the lane at ``x = +lane_offset``, turns left with
    radius ``turn_radius`` and leaves westbound.  The TV drives south along
    ``x = -lane_offset``.  The LV reference polyline is replaced by its
    least-squares cubic, which is the path vehicles actually follow.
    """

    lane_offset: float = 1.75
    turn_radius: float = 12.0
    approach_length: float = 35.0
    exit_length: float = 20.0
    sample_step: float = 0.5

    def lv_polyline(self) -> np.ndarray:
        c = self.lane_offset - self.turn_radius
        n_a = max(2, int(self.approach_length / self.sample_step))
        approach = np.column_stack([
            np.full(n_a, self.lane_offset),
            np.linspace(-self.approach_length, 0.0, n_a, endpoint=False),
        ])
        n_t = max(4, int(0.5 * math.pi * self.turn_radius / self.sample_step))
        th = np.linspace(0.0, 0.5 * math.pi, n_t, endpoint=False)
        arc = np.column_stack([c + self.turn_radius * np.cos(th), self.turn_radius * np.sin(th)])
        n_e = max(2, int(self.exit_length / self.sample_step))
        exit_ = np.column_stack([
            np.linspace(c, c - self.exit_length, n_e),
            np.full(n_e, self.turn_radius),
        ])
        return np.vstack([approach, arc, exit_])

    def tv_polyline(self) -> np.ndarray:
        x = -self.lane_offset
        top = self.turn_radius + self.approach_length
        ys = np.linspace(top, -self.exit_length, 200)
        return np.column_stack([np.full_like(ys, x), ys])


@dataclass(frozen=True)
class Layout:
    """Fitted paths and the arc-length position of the conflict point on each."""

    lv_path: PathModel
    tv_path: PathModel
    conflict_point: tuple[float, float]
    lv_conflict_s: float
    tv_conflict_s: float


@lru_cache(maxsize=8)
def build_layout(geometry: IntersectionGeometry = IntersectionGeometry()) -> Layout:
    lv = fit_path(geometry.lv_polyline())
    tv = fit_path(geometry.tv_polyline())
    hit = intersect_paths(lv, tv)
    if hit is None:
        raise PathError("paths do not intersect")
    point, s_lv, s_tv = hit
    return Layout(lv, tv, point, s_lv, s_tv)


@dataclass(frozen=True)
class Scenario:
    """Initial speeds (m/s) and head distances to the conflict point (m)."""

    lv_speed: float
    lv_dist: float
    tv_speed: float
    tv_dist: float
    geometry: IntersectionGeometry = field(default_factory=IntersectionGeometry)

    @classmethod
    def from_kmh(cls, lv_kmh, lv_dist, tv_kmh, tv_dist, **kw) -> "Scenario":
        return cls(kmh_to_ms(lv_kmh), lv_dist, kmh_to_ms(tv_kmh), tv_dist, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls.from_kmh(
            float(d["lv"]["speed_kmh"]), float(d["lv"]["dist_m"]),
            float(d["tv"]["speed_kmh"]), float(d["tv"]["dist_m"]),
        )

    def to_dict(self) -> dict:
        return {
            "lv": {"speed_kmh": self.lv_speed * 3.6, "dist_m": self.lv_dist},
            "tv": {"speed_kmh": self.tv_speed * 3.6, "dist_m": self.tv_dist},
        }

    @property
    def initial_rttc(self) -> float:
        return abs(self.lv_dist / max(self.lv_speed, 0.1) - self.tv_dist / max(self.tv_speed, 0.1))


CASE_STUDIES = {
    "table3-case1": Scenario.from_kmh(10.80, 23.51, 10.80, 22.56),
    "table3-case2": Scenario.from_kmh(14.40, 15.50, 28.80, 33.72),
}


def sample_scenario(rng: np.random.Generator, speed_kmh=(10.0, 36.0), dist_m=(10.0, 40.0)) -> Scenario:
    """Independent uniform speeds and distances for both vehicles."""
    lv_v, tv_v = rng.uniform(*speed_kmh, size=2)
    lv_d, tv_d = rng.uniform(*dist_m, size=2)
    return Scenario.from_kmh(float(lv_v), float(lv_d), float(tv_v), float(tv_d))
