"""Logit quantal response equilibrium and the pure-strategy Nash baseline."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .game import ConfigurationError, DomainError, GameMatrix, PlayerRole, scalarize

LAMBDA_CAP = 1e4


@dataclass(frozen=True)
class RationalityProfile:
    """Rationality (lambda) per distance-to-conflict bin."""

    values: np.ndarray
    bin_width: float = 2.0
    max_distance: float = 40.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        n = math.ceil(self.max_distance / self.bin_width)
        if values.shape != (n,):
            raise ConfigurationError(
                f"expected {n} bins for max_distance={self.max_distance}, "
                f"bin_width={self.bin_width}; got shape {values.shape}"
            )
        if np.any(values < 0):
            raise ConfigurationError("rationality values must be non-negative")
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, value: float, bin_width: float = 2.0, max_distance: float = 40.0):
        n = math.ceil(max_distance / bin_width)
        return cls(np.full(n, float(value)), bin_width, max_distance)

    @property
    def n_bins(self) -> int:
        return len(self.values)

    def bin_index(self, dist_to_conflict):
        """Bin of a distance (scalar or array); distances beyond range use the last bin."""
        d = np.maximum(np.asarray(dist_to_conflict, dtype=float), 0.0)
        idx = np.minimum(np.floor(d / self.bin_width).astype(int), self.n_bins - 1)
        return int(idx) if idx.ndim == 0 else idx

    def with_values(self, values) -> "RationalityProfile":
        return RationalityProfile(np.asarray(values, dtype=float), self.bin_width, self.max_distance)


def lookup_lambda(profile: RationalityProfile, dist_to_conflict: float) -> float:
    if dist_to_conflict < 0:
        raise DomainError("distance to conflict must be non-negative")
    return float(profile.values[profile.bin_index(dist_to_conflict)])


@dataclass(frozen=True)
class QreSolution:
    p_lv: np.ndarray
    p_tv: np.ndarray
    iterations: int
    residual: float
    converged: bool


def _check_strategy(p, n, who):
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != n:
        raise ConfigurationError(f"{who} strategy has {p.shape[-1]} entries, expected {n}")
    return p


def expected_payoffs(game: GameMatrix, weights: np.ndarray, opponent, role: PlayerRole) -> np.ndarray:
    """Expected scalar payoff of each own action against a mixed opponent."""
    n_lv, n_tv = game.shape
    payoff = scalarize(game.components(role), weights)
    if role is PlayerRole.LV:
        return payoff @ _check_strategy(opponent, n_tv, "TV")
    return _check_strategy(opponent, n_lv, "LV") @ payoff


def softmax(z: np.ndarray) -> np.ndarray:
    """Softmax along the last axis with max subtraction."""
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def clamp_lambda(lam):
    return np.clip(lam, 0.0, LAMBDA_CAP)


def logit_response(expected, lam) -> np.ndarray:
    expected = np.asarray(expected, dtype=float)
    lam = clamp_lambda(np.asarray(lam, dtype=float))
    if lam.ndim:
        lam = lam[..., None]
    return softmax(lam * expected)


def solve_qre_arrays(
    u_lv: np.ndarray,
    u_tv: np.ndarray,
    lam_lv,
    lam_tv,
    init_lv: np.ndarray | None = None,
    init_tv: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iter: int = 500,
    damping: float = 0.0,
    simultaneous: bool = False,
):
    """Fixed-point iteration on scalarized payoffs, batched over leading axes.

    ``u_lv`` and ``u_tv`` have shape ``(..., n_lv, n_tv)``.  Returns
    ``(p_lv, p_tv, iterations, residual, converged)`` where the last three
    are arrays over the batch.  Each batch element stops updating as soon
    as its own residual drops below ``tol``.
    """
    if tol <= 0 or max_iter < 1:
        raise ConfigurationError("tol must be > 0 and max_iter >= 1")
    if not (0.0 <= damping < 1.0):
        raise ConfigurationError("damping must lie in [0, 1)")
    u_lv = np.asarray(u_lv, dtype=float)
    u_tv = np.asarray(u_tv, dtype=float)
    if not (np.all(np.isfinite(u_lv)) and np.all(np.isfinite(u_tv))):
        raise DomainError("non-finite payoffs")
    batch = u_lv.shape[:-2]
    n_lv, n_tv = u_lv.shape[-2:]
    lam_lv = np.broadcast_to(clamp_lambda(np.asarray(lam_lv, float)), batch)[..., None]
    lam_tv = np.broadcast_to(clamp_lambda(np.asarray(lam_tv, float)), batch)[..., None]
    p_lv = np.full(batch + (n_lv,), 1.0 / n_lv) if init_lv is None else np.array(
        np.broadcast_to(init_lv, batch + (n_lv,)), dtype=float)
    p_tv = np.full(batch + (n_tv,), 1.0 / n_tv) if init_tv is None else np.array(
        np.broadcast_to(init_tv, batch + (n_tv,)), dtype=float)

    active = np.ones(batch, dtype=bool)
    iterations = np.zeros(batch, dtype=int)
    residual = np.full(batch, np.inf)
    for _ in range(max_iter):
        e_tv = np.einsum("...i,...ij->...j", p_lv, u_tv)
        new_tv = softmax(lam_tv * e_tv)
        if damping:
            new_tv = (1.0 - damping) * new_tv + damping * p_tv
        opp = p_tv if simultaneous else new_tv
        e_lv = np.einsum("...ij,...j->...i", u_lv, opp)
        new_lv = softmax(lam_lv * e_lv)
        if damping:
            new_lv = (1.0 - damping) * new_lv + damping * p_lv
        change = np.maximum(
            np.abs(new_lv - p_lv).max(axis=-1), np.abs(new_tv - p_tv).max(axis=-1)
        )
        # an element whose sweep moved less than tol keeps its current iterate,
        # so one further sweep from the returned point is certified below tol
        settled = change < tol
        a = (active & ~settled)[..., None]
        p_lv = np.where(a, new_lv, p_lv)
        p_tv = np.where(a, new_tv, p_tv)
        residual = np.where(active, change, residual)
        iterations = iterations + active
        active = active & ~settled
        if not active.any():
            break
    return p_lv, p_tv, iterations, residual, ~active


def solve_qre(
    game: GameMatrix,
    weights_lv: np.ndarray,
    weights_tv: np.ndarray,
    lam_lv: float,
    lam_tv: float,
    init_lv=None,
    init_tv=None,
    tol: float = 1e-8,
    max_iter: int = 500,
    damping: float = 0.0,
    simultaneous: bool = False,
) -> QreSolution:
    """Solve the logit QRE of one game.

    The default is a Gauss-Seidel sweep: TV responds to the current LV
    strategy, then LV responds to the fresh TV strategy.  ``simultaneous``
    switches to a Jacobi update.  ``residual`` is the largest absolute
    probability change of the last sweep.
    """
    n_lv, n_tv = game.shape
    if init_lv is not None:
        init_lv = _check_strategy(init_lv, n_lv, "LV")
    if init_tv is not None:
        init_tv = _check_strategy(init_tv, n_tv, "TV")
    u_lv = scalarize(game.lv_components, weights_lv)
    u_tv = scalarize(game.tv_components, weights_tv)
    p_lv, p_tv, it, res, conv = solve_qre_arrays(
        u_lv, u_tv, lam_lv, lam_tv, init_lv, init_tv, tol, max_iter, damping, simultaneous
    )
    return QreSolution(p_lv, p_tv, int(it), float(res), bool(conv))


def qre_update(u_lv, u_tv, lam_lv, lam_tv, p_lv, p_tv):
    """One Gauss-Seidel sweep; used to verify fixed points."""
    new_tv = logit_response(np.einsum("...i,...ij->...j", p_lv, u_tv), lam_tv)
    new_lv = logit_response(np.einsum("...ij,...j->...i", u_lv, new_tv), lam_lv)
    return new_lv, new_tv


def pure_ne_cells(a: np.ndarray, b: np.ndarray) -> list[tuple[int, int]]:
    """All pure Nash cells of the bimatrix (LV payoff ``a``, TV payoff ``b``)."""
    a = np.asarray(a)
    b = np.asarray(b)
    best_lv = a >= a.max(axis=0, keepdims=True)
    best_tv = b >= b.max(axis=1, keepdims=True)
    return [(int(i), int(j)) for i, j in zip(*np.nonzero(best_lv & best_tv))]


def solve_pure_ne(game: GameMatrix, weights_lv, weights_tv) -> list[tuple[int, int]]:
    return pure_ne_cells(
        scalarize(game.lv_components, weights_lv), scalarize(game.tv_components, weights_tv)
    )


def select_ne_cell(cells, a: np.ndarray, b: np.ndarray) -> tuple[int, int]:
    """Pick one cell: the NE with the largest joint payoff, else both maximin actions."""
    if cells:
        total = a + b
        # sorted cells + strict comparison keeps the lexicographically first on ties
        best = None
        for cell in sorted(cells):
            if best is None or total[cell] > total[best]:
                best = cell
        return best
    return int(np.argmax(a.min(axis=1))), int(np.argmax(b.min(axis=0)))


def select_ne_action(solutions, game: GameMatrix, weights_lv, weights_tv) -> tuple[float, float]:
    """Acceleration pair chosen by the NE baseline."""
    a = scalarize(game.lv_components, weights_lv)
    b = scalarize(game.tv_components, weights_tv)
    i, j = select_ne_cell(solutions, a, b)
    return game.lv_actions[i], game.tv_actions[j]
