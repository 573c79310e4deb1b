"""Collision detection, post-encroachment time and VSP-based fuel use."""
from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np


@dataclass(frozen=True)
class OrientedRectangle:
    x: float
    y: float
    heading: float
    length: float
    width: float

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ValueError("rectangle dimensions must be positive")

    def corners(self) -> np.ndarray:
        c, s = math.cos(self.heading), math.sin(self.heading)
        hl, hw = 0.5 * self.length, 0.5 * self.width
        local = np.array([[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.x, self.y])

    def contains(self, px, py) -> np.ndarray:
        """Point-in-rectangle test (boundary inclusive), vectorized over points."""
        c, s = math.cos(self.heading), math.sin(self.heading)
        dx = np.asarray(px) - self.x
        dy = np.asarray(py) - self.y
        u = dx * c + dy * s
        v = -dx * s + dy * c
        return (np.abs(u) <= 0.5 * self.length) & (np.abs(v) <= 0.5 * self.width)


def _half_extent(r: OrientedRectangle, ax: float, ay: float) -> float:
    c, s = math.cos(r.heading), math.sin(r.heading)
    return 0.5 * r.length * abs(c * ax + s * ay) + 0.5 * r.width * abs(-s * ax + c * ay)


def detect_collision(a: OrientedRectangle, b: OrientedRectangle) -> bool:
    """Separating-axis test over both rectangles' edge normals; touching counts."""
    dx, dy = b.x - a.x, b.y - a.y
    reach = 0.5 * (math.hypot(a.length, a.width) + math.hypot(b.length, b.width))
    if dx * dx + dy * dy > reach * reach:
        return False
    for h in (a.heading, b.heading):
        c, s = math.cos(h), math.sin(h)
        for ax, ay in ((c, s), (-s, c)):
            if abs(dx * ax + dy * ay) > _half_extent(a, ax, ay) + _half_extent(b, ax, ay):
                return False
    return True


def crossing_time(t: np.ndarray, s: np.ndarray, level: float):
    """First time a non-decreasing series ``s`` reaches ``level``, interpolated; None if never."""
    s = np.asarray(s)
    idx = int(np.searchsorted(s, level, side="left"))
    if idx >= len(s):
        return None
    if idx == 0:
        return float(t[0])
    s0, s1 = s[idx - 1], s[idx]
    f = (level - s0) / (s1 - s0)
    return float(t[idx - 1] + f * (t[idx] - t[idx - 1]))


@dataclass(frozen=True)
class ConflictZone:
    """Zone of half-width ``half_width`` around the conflict point, in each path's arc length."""

    lv_conflict_s: float
    tv_conflict_s: float
    half_width: float


def zone_times(t, s_head, conflict_s, half_width, length):
    """(entry of the head, exit of the rear) for one vehicle."""
    enter = crossing_time(t, s_head, conflict_s - half_width)
    leave = crossing_time(t, np.asarray(s_head) - length, conflict_s + half_width)
    return enter, leave


def compute_pet(lv_series, tv_series, zone: ConflictZone, lv_length=4.5, tv_length=4.5):
    """Post-encroachment time from ``(t, s_head)`` series of both vehicles.

    Time from the first vehicle's rear leaving the zone to the second
    vehicle's head entering it.  Returns None when either vehicle does not
    complete its pass within the series.
    """
    lv_in, lv_out = zone_times(*lv_series, zone.lv_conflict_s, zone.half_width, lv_length)
    tv_in, tv_out = zone_times(*tv_series, zone.tv_conflict_s, zone.half_width, tv_length)
    if None in (lv_in, lv_out, tv_in, tv_out):
        return None
    if lv_out <= tv_out:
        return tv_in - lv_out
    return lv_in - tv_out


@dataclass(frozen=True)
class FuelTable:
    bin_edges: tuple[float, ...]
    rates: tuple[float, ...]
    accel_coef: float = 1.1
    rolling_coef: float = 0.132
    aero_coef: float = 0.000302
    version: int = 1

    def __post_init__(self):
        if len(self.rates) != len(self.bin_edges) + 1:
            raise ValueError("need one more rate than bin edges")

    @classmethod
    def from_dict(cls, d: dict) -> "FuelTable":
        c = d.get("vsp_coefficients", {})
        return cls(tuple(d["bin_edges"]), tuple(d["rates"]),
                   c.get("accel", 1.1), c.get("rolling", 0.132), c.get("aero", 0.000302),
                   int(d.get("version", 1)))

    @classmethod
    def default(cls) -> "FuelTable":
        return _default_table()

    def vsp(self, v: float, a: float) -> float:
        return v * (self.accel_coef * a + self.rolling_coef) + self.aero_coef * v**3

    def rate(self, v: float, a: float) -> float:
        return self.rates[bisect.bisect_right(self.bin_edges, self.vsp(v, a))]


_TABLE = None


def _default_table() -> FuelTable:
    global _TABLE
    if _TABLE is None:
        text = resources.files("leftturn").joinpath("resources/vsp_fuel_v1.json").read_text()
        _TABLE = FuelTable.from_dict(json.loads(text))
    return _TABLE


def fuel_consumption(series, dt: float, table: FuelTable | None = None) -> float:
    """Total fuel (mL) over ``(speed, accel)`` samples held for ``dt`` each."""
    table = table or _default_table()
    return sum(table.rate(v, a) for v, a in series) * dt
