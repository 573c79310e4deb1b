"""Pre-planned vehicle paths: cubic fits in a path-local frame with arc-length lookup."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class PathError(ValueError):
    pass


ARC_STEP = 0.05


@dataclass(frozen=True)
class PathModel:
    """Cubic ``y(x)`` in a local frame plus a dense arc-length table.

    The local frame has its origin at ``origin`` and its x axis along
    ``axis`` (unit vector).  ``table`` holds rows ``(s, x, y)`` in world
    coordinates; queries outside ``[0, length]`` extrapolate along the end
    tangents.
    """

    coefficients: np.ndarray  # c0..c3 of y = c0 + c1 x + c2 x^2 + c3 x^3
    origin: np.ndarray
    axis: np.ndarray
    x_range: tuple[float, float]
    table: np.ndarray

    @property
    def length(self) -> float:
        return float(self.table[-1, 0])

    @property
    def s(self) -> np.ndarray:
        return self.table[:, 0]

    @property
    def normal(self) -> np.ndarray:
        return np.array([-self.axis[1], self.axis[0]])

    def local_to_world(self, xl, yl) -> np.ndarray:
        xl = np.asarray(xl, float)
        yl = np.asarray(yl, float)
        return self.origin + xl[..., None] * self.axis + yl[..., None] * self.normal

    def _end_tangents(self):
        t = self.table
        d0 = t[1, 1:] - t[0, 1:]
        d1 = t[-1, 1:] - t[-2, 1:]
        return d0 / np.hypot(*d0), d1 / np.hypot(*d1)

    def point(self, s: float) -> tuple[float, float]:
        t = self.table
        if s <= 0.0:
            u0, _ = self._end_tangents()
            return float(t[0, 1] + s * u0[0]), float(t[0, 2] + s * u0[1])
        if s >= t[-1, 0]:
            _, u1 = self._end_tangents()
            ds = s - t[-1, 0]
            return float(t[-1, 1] + ds * u1[0]), float(t[-1, 2] + ds * u1[1])
        k = int(np.searchsorted(t[:, 0], s)) - 1
        f = (s - t[k, 0]) / (t[k + 1, 0] - t[k, 0])
        return (float(t[k, 1] + f * (t[k + 1, 1] - t[k, 1])),
                float(t[k, 2] + f * (t[k + 1, 2] - t[k, 2])))

    def heading(self, s: float) -> float:
        t = self.table
        if s <= 0.0:
            u, _ = self._end_tangents()
        elif s >= t[-1, 0]:
            _, u = self._end_tangents()
        else:
            k = int(np.searchsorted(t[:, 0], s)) - 1
            u = t[k + 1, 1:] - t[k, 1:]
        return math.atan2(u[1], u[0])

    def project(self, x: float, y: float) -> float:
        """Arc length of the closest point on the (end-extended) path."""
        p = self.table[:, 1:]
        a = p[:-1]
        d = p[1:] - a
        seg2 = np.einsum("ij,ij->i", d, d)
        f = np.einsum("ij,ij->i", np.array([x, y]) - a, d) / seg2
        lo = np.zeros_like(f)
        hi = np.ones_like(f)
        lo[0] = -np.inf
        hi[-1] = np.inf
        f = np.clip(f, lo, hi)
        q = a + f[:, None] * d
        dist = np.hypot(q[:, 0] - x, q[:, 1] - y)
        k = int(np.argmin(dist))
        return float(self.table[k, 0] + f[k] * math.sqrt(seg2[k]))


def _eval_cubic(c, x):
    return c[0] + x * (c[1] + x * (c[2] + x * c[3]))


def _candidate_axes(chord_dir):
    """Chord direction first, then the world axes pointing along travel."""
    axes = [chord_dir]
    for ax in (np.array([1.0, 0.0]), np.array([0.0, 1.0])):
        axes.append(ax if ax @ chord_dir >= 0 else -ax)
    return axes


def _fit_in_frame(rel, axis, require_monotone=True):
    """Least-squares cubic in the frame along ``axis``; None if x runs backwards."""
    normal = np.array([-axis[1], axis[0]])
    xl = rel @ axis
    if require_monotone and np.any(np.diff(xl) < 0):
        return None
    vander = np.vander(xl, 4, increasing=True)
    if np.linalg.matrix_rank(vander) < 4:
        return None
    yl = rel @ normal
    coef, *_ = np.linalg.lstsq(vander, yl, rcond=None)
    return float(np.sum((vander @ coef - yl) ** 2)), axis, normal, coef, xl


def fit_path(points, step: float = ARC_STEP) -> PathModel:
    """Least-squares cubic through ``points`` (ordered along travel).

    The local frame is whichever of the chord direction and the two world
    axes keeps the abscissa strictly monotone and fits best.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 4:
        raise PathError("fit_path needs at least 4 (x, y) points")
    origin = pts[0]
    chord = pts[-1] - pts[0]
    norm = math.hypot(*chord)
    if norm == 0.0:
        raise PathError("path endpoints coincide")
    best = None
    for k, axis in enumerate(_candidate_axes(chord / norm)):
        fit = _fit_in_frame(pts - origin, axis, require_monotone=k > 0)
        if fit is not None and (best is None or fit[0] < best[0] - 1e-12):
            best = fit
    if best is None:
        raise PathError("rank-deficient cubic fit (fewer than 4 distinct abscissae)")
    _, axis, normal, coef, xl = best
    x0, x1 = float(xl.min()), float(xl.max())

    probe = np.linspace(x0, x1, 64)
    slope = coef[1] + probe * (2 * coef[2] + 3 * coef[3] * probe)
    stretch = math.sqrt(1.0 + float(np.max(slope**2)))
    n = max(2, math.ceil((x1 - x0) * stretch / step) + 1)
    xs = np.linspace(x0, x1, n)
    ys = _eval_cubic(coef, xs)
    world = origin + xs[:, None] * axis + ys[:, None] * normal
    seg = np.hypot(*np.diff(world, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if np.any(np.diff(s) <= 0):
        raise PathError("degenerate arc-length table")
    table = np.column_stack([s, world])
    return PathModel(coef, origin, axis, (x0, x1), table)


def _segment_hits(a0, a1, b0, b1):
    """Pairwise segment intersection parameters (ta, tb) and a hit mask."""
    da = a1 - a0
    db = b1 - b0
    r = b0[None, :, :] - a0[:, None, :]
    den = da[:, None, 0] * db[None, :, 1] - da[:, None, 1] * db[None, :, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        ta = (r[..., 0] * db[None, :, 1] - r[..., 1] * db[None, :, 0]) / den
        tb = (r[..., 0] * da[:, None, 1] - r[..., 1] * da[:, None, 0]) / den
    hit = (den != 0) & (ta >= 0) & (ta <= 1) & (tb >= 0) & (tb <= 1)
    return ta, tb, hit


def intersect_paths(a: PathModel, b: PathModel, coarse: int = 20):
    """First crossing of ``b`` along ``a``: returns ``((x, y), s_a, s_b)`` or None."""
    ta_, tb_ = a.table, b.table

    def coarse_idx(t):
        idx = np.arange(0, len(t), coarse)
        return idx if idx[-1] == len(t) - 1 else np.append(idx, len(t) - 1)

    ia, ib = coarse_idx(ta_), coarse_idx(tb_)
    pa, pb = ta_[ia, 1:], tb_[ib, 1:]
    _, _, hit = _segment_hits(pa[:-1], pa[1:], pb[:-1], pb[1:])
    cand = list(zip(*np.nonzero(hit)))
    if not cand:
        # coarse chords can miss a near-tangent crossing; fall back to proximity
        ca = [(k, m) for k in range(len(ia) - 1) for m in range(len(ib) - 1)]
        mid_a = 0.5 * (pa[:-1] + pa[1:])
        mid_b = 0.5 * (pb[:-1] + pb[1:])
        dist = np.hypot(*(mid_a[:, None, :] - mid_b[None, :, :]).transpose(2, 0, 1))
        span = coarse * ARC_STEP * 2
        cand = [(k, m) for k, m in ca if dist[k, m] < span]
    best = None
    for k, m in sorted(cand):
        lo_a, hi_a = ia[max(k - 1, 0)], ia[min(k + 2, len(ia) - 1)]
        lo_b, hi_b = ib[max(m - 1, 0)], ib[min(m + 2, len(ib) - 1)]
        fa = ta_[lo_a:hi_a + 1]
        fb = tb_[lo_b:hi_b + 1]
        t1, t2, h = _segment_hits(fa[:-1, 1:], fa[1:, 1:], fb[:-1, 1:], fb[1:, 1:])
        for i, j in zip(*np.nonzero(h)):
            sa = fa[i, 0] + t1[i, j] * (fa[i + 1, 0] - fa[i, 0])
            if best is None or sa < best[1]:
                sb = fb[j, 0] + t2[i, j] * (fb[j + 1, 0] - fb[j, 0])
                xy = fa[i, 1:] + t1[i, j] * (fa[i + 1, 1:] - fa[i, 1:])
                best = ((float(xy[0]), float(xy[1])), float(sa), float(sb))
        if best is not None:
            break
    return best
