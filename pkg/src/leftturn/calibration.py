"""Maximum-likelihood calibration of payoff weights and rationality profiles by EM.

The choice model is an explicit logit: for a frame ``n`` the LV logits are
``lambda_LV(d) * sum_j U_LV[i, j] q_TV[j]`` with ``U = sum_c w[c] * C[c]``
and ``q_TV`` taken from the previous E-step (held constant in the M-step).
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .game import (
    LV_ACTIONS,
    TV_ACTIONS,
    ConfigurationError,
    NormalizationConstants,
    PlayerRole,
    raw_components,
)
from .params import ModelParameters, check_weights, initial_parameters
from .qre import LAMBDA_CAP, softmax, solve_qre_arrays

log = logging.getLogger(__name__)

LOG_FLOOR = 1e-12
WEIGHT_FLOOR = 1e-6


class CalibrationError(RuntimeError):
    """Non-finite loss or another unrecoverable numerical failure."""


@dataclass(frozen=True)
class CalibrationConfig:
    em_tol: float = 0.01
    em_max_iter: int = 20
    learning_rate: float = 0.1
    batch_size: int = 32
    epochs_per_em_iter: int = 30
    smoothing_sigma: float = 1.0
    seed: int = 0
    val_fraction: float = 0.3
    # trimmed bounds for payoff normalization; (0, 1) is plain min-max
    norm_quantiles: tuple[float, float] = (0.05, 0.95)
    smooth_every_epoch: bool = True
    horizon: float = 1.0
    bin_width: float = 2.0
    max_distance: float = 40.0
    qre_tol: float = 1e-8
    qre_max_iter: int = 500

    def __post_init__(self):
        if not self.em_tol > 0:
            raise ConfigurationError("em_tol must be > 0")
        for name in ("em_max_iter", "batch_size", "epochs_per_em_iter"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.learning_rate < 0 or self.smoothing_sigma < 0:
            raise ConfigurationError("learning_rate and smoothing_sigma must be >= 0")
        if not 0 <= self.val_fraction < 1:
            raise ConfigurationError("val_fraction must lie in [0, 1)")
        lo, hi = self.norm_quantiles
        if not 0 <= lo < hi <= 1:
            raise ConfigurationError("norm_quantiles must satisfy 0 <= lo < hi <= 1")

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


# ---------------------------------------------------------------- frame tensors

@dataclass
class FrameBatch:
    """Normalized payoff components and labels of a set of frames.

    ``c_lv``/``c_tv``: (N, 3, 3, 5); ``y_lv``/``y_tv``: label indices;
    ``bin_lv``/``bin_tv``: rationality bin of each player's own distance.
    """

    c_lv: np.ndarray
    c_tv: np.ndarray
    y_lv: np.ndarray
    y_tv: np.ndarray
    bin_lv: np.ndarray
    bin_tv: np.ndarray
    episode_ids: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.y_lv)

    def subset(self, idx) -> "FrameBatch":
        idx = np.asarray(idx, dtype=int)
        eids = [self.episode_ids[k] for k in idx] if self.episode_ids else []
        return FrameBatch(self.c_lv[idx], self.c_tv[idx], self.y_lv[idx], self.y_tv[idx],
                          self.bin_lv[idx], self.bin_tv[idx], eids)


def raw_frame_tensors(frames, horizon: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    lv, tv = zip(*(raw_components(f.lv_state, f.tv_state, horizon) for f in frames))
    return np.stack(lv), np.stack(tv)


def fit_normalization(frames, horizon: float = 1.0, quantiles=(0.0, 1.0)) -> NormalizationConstants:
    lv, tv = raw_frame_tensors(frames, horizon)
    return NormalizationConstants.fit(lv, tv, quantiles)


def frame_batch(frames, params: ModelParameters, horizon: float = 1.0) -> FrameBatch:
    if len(frames) == 0:
        raise ConfigurationError("no frames")
    lv_raw, tv_raw = raw_frame_tensors(frames, horizon)
    norms = params.normalization
    prof_lv, prof_tv = params.lam(PlayerRole.LV), params.lam(PlayerRole.TV)
    return FrameBatch(
        norms.apply(lv_raw, PlayerRole.LV),
        norms.apply(tv_raw, PlayerRole.TV),
        np.array([f.lv_label for f in frames], dtype=int),
        np.array([f.tv_label for f in frames], dtype=int),
        np.asarray(prof_lv.bin_index(np.array([f.lv_state.dist_to_conflict for f in frames]))),
        np.asarray(prof_tv.bin_index(np.array([f.tv_state.dist_to_conflict for f in frames]))),
        [f.episode_id for f in frames],
    )


@dataclass
class ProbCache:
    """Per-frame equilibrium strategies from the latest E-step."""

    p_lv: np.ndarray
    p_tv: np.ndarray

    @classmethod
    def uniform(cls, n: int) -> "ProbCache":
        return cls(np.full((n, len(LV_ACTIONS)), 1.0 / len(LV_ACTIONS)),
                   np.full((n, len(TV_ACTIONS)), 1.0 / len(TV_ACTIONS)))

    def subset(self, idx) -> "ProbCache":
        return ProbCache(self.p_lv[idx], self.p_tv[idx])


# ---------------------------------------------------------------- likelihood

@dataclass
class _Forward:
    p_lv: np.ndarray
    p_tv: np.ndarray
    e_lv: np.ndarray
    e_tv: np.ndarray
    lam_lv: np.ndarray
    lam_tv: np.ndarray


def _forward(w_lv, w_tv, lam_lv, lam_tv, batch: FrameBatch, cache: ProbCache) -> _Forward:
    u_lv = np.einsum("ncij,cij->nij", batch.c_lv, w_lv)
    u_tv = np.einsum("ncij,cij->nij", batch.c_tv, w_tv)
    e_lv = np.einsum("nij,nj->ni", u_lv, cache.p_tv)
    e_tv = np.einsum("ni,nij->nj", cache.p_lv, u_tv)
    l_lv = np.asarray(lam_lv)[batch.bin_lv]
    l_tv = np.asarray(lam_tv)[batch.bin_tv]
    return _Forward(softmax(l_lv[:, None] * e_lv), softmax(l_tv[:, None] * e_tv), e_lv, e_tv, l_lv, l_tv)


def _unpack(params: ModelParameters):
    return (params.w(PlayerRole.LV), params.w(PlayerRole.TV),
            params.lam(PlayerRole.LV).values, params.lam(PlayerRole.TV).values)


def frame_nll(params: ModelParameters, batch: FrameBatch, cache: ProbCache):
    """Per-frame NLL and a mask of frames whose label probability hit the floor."""
    fw = _forward(*_unpack(params), batch, cache)
    n = np.arange(len(batch))
    pl = fw.p_lv[n, batch.y_lv]
    pt = fw.p_tv[n, batch.y_tv]
    flagged = (pl < LOG_FLOOR) | (pt < LOG_FLOOR)
    return -(np.log(np.maximum(pl, LOG_FLOOR)) + np.log(np.maximum(pt, LOG_FLOOR))), flagged


def negative_log_likelihood(params: ModelParameters, batch: FrameBatch, cache: ProbCache) -> float:
    nll, flagged = frame_nll(params, batch, cache)
    if flagged.any():
        log.debug("%d frames with label probability below %g", int(flagged.sum()), LOG_FLOOR)
    return float(nll.sum())


@dataclass
class Gradients:
    w_lv: np.ndarray
    w_tv: np.ndarray
    lam_lv: np.ndarray
    lam_tv: np.ndarray

    def scaled(self, factor: float) -> "Gradients":
        return Gradients(self.w_lv * factor, self.w_tv * factor, self.lam_lv * factor, self.lam_tv * factor)


def gradients(params: ModelParameters, batch: FrameBatch, cache: ProbCache) -> Gradients:
    """Exact gradient of the summed NLL, opponent strategies held fixed."""
    w_lv, w_tv, lam_lv, lam_tv = _unpack(params)
    fw = _forward(w_lv, w_tv, lam_lv, lam_tv, batch, cache)
    n = len(batch)
    r_lv = fw.p_lv.copy()
    r_lv[np.arange(n), batch.y_lv] -= 1.0
    r_tv = fw.p_tv.copy()
    r_tv[np.arange(n), batch.y_tv] -= 1.0
    # d/dE = lambda * (p - y); dE_lv[i]/dw[c,i,j] = C[c,i,j] q_tv[j]
    g_lv = np.einsum("ni,nj,ncij->cij", fw.lam_lv[:, None] * r_lv, cache.p_tv, batch.c_lv)
    g_tv = np.einsum("nj,ni,ncij->cij", fw.lam_tv[:, None] * r_tv, cache.p_lv, batch.c_tv)
    gl_lv = np.bincount(batch.bin_lv, weights=(r_lv * fw.e_lv).sum(axis=1), minlength=len(lam_lv))
    gl_tv = np.bincount(batch.bin_tv, weights=(r_tv * fw.e_tv).sum(axis=1), minlength=len(lam_tv))
    return Gradients(g_lv, g_tv, gl_lv, gl_tv)


def batch_mean(grads: Gradients, batch: FrameBatch) -> Gradients:
    """Per-parameter average over the frames of ``batch`` that touch it.

    Every frame touches every weight, so weight gradients are divided by the
    batch size; a rationality bin only sees the frames falling into it.
    """
    n = max(len(batch), 1)
    c_lv = np.maximum(np.bincount(batch.bin_lv, minlength=len(grads.lam_lv)), 1)
    c_tv = np.maximum(np.bincount(batch.bin_tv, minlength=len(grads.lam_tv)), 1)
    return Gradients(grads.w_lv / n, grads.w_tv / n, grads.lam_lv / c_lv, grads.lam_tv / c_tv)


def sgd_step(params: ModelParameters, grads: Gradients, learning_rate: float) -> ModelParameters:
    """``params - lr * grads`` with rationality clamped to ``[0, LAMBDA_CAP]``."""
    out = params.copy()
    out.weights[PlayerRole.LV] = params.w(PlayerRole.LV) - learning_rate * grads.w_lv
    out.weights[PlayerRole.TV] = params.w(PlayerRole.TV) - learning_rate * grads.w_tv
    for role, g in ((PlayerRole.LV, grads.lam_lv), (PlayerRole.TV, grads.lam_tv)):
        prof = params.lam(role)
        out.rationality[role] = prof.with_values(np.clip(prof.values - learning_rate * g, 0.0, LAMBDA_CAP))
    return out


# ---------------------------------------------------------------- weight regularization

def gaussian_kernel(sigma: float) -> np.ndarray:
    x = np.array([-1.0, 0.0, 1.0])
    with np.errstate(over="ignore", divide="ignore"):
        k1 = np.exp(-0.5 * (x / sigma) ** 2)
    return np.outer(k1, k1)


def smooth_weights(w: np.ndarray, sigma: float) -> np.ndarray:
    """3x3 Gaussian smoothing of each component plane over the action grid.

    At the borders the kernel is truncated and renormalized over the cells
    that exist, so constant planes are fixed points.
    """
    if sigma < 0:
        raise ConfigurationError("sigma must be >= 0")
    w = np.asarray(w, dtype=float)
    if sigma == 0:
        return w.copy()
    k = gaussian_kernel(sigma)
    n_i, n_j = w.shape[-2:]
    pad = np.pad(w, [(0, 0)] * (w.ndim - 2) + [(1, 1), (1, 1)])
    mask = np.pad(np.ones((n_i, n_j)), 1)
    num = np.zeros_like(w)
    den = np.zeros((n_i, n_j))
    for di in range(3):
        for dj in range(3):
            num += k[di, dj] * pad[..., di:di + n_i, dj:dj + n_j]
            den += k[di, dj] * mask[di:di + n_i, dj:dj + n_j]
    return num / den


def normalize_weights(w: np.ndarray) -> np.ndarray:
    """Clamp at ``1e-6`` and rescale each cell's components to sum to one."""
    w = np.maximum(np.asarray(w, dtype=float), WEIGHT_FLOOR)
    return w / w.sum(axis=-3, keepdims=True)


def regularize(params: ModelParameters, sigma: float) -> ModelParameters:
    out = params.copy()
    for role in PlayerRole:
        out.weights[role] = normalize_weights(smooth_weights(params.w(role), sigma))
    return out


# ---------------------------------------------------------------- equilibrium over frames

def equilibrium(params: ModelParameters, batch: FrameBatch, init: ProbCache | None = None,
                tol: float = 1e-8, max_iter: int = 500) -> ProbCache:
    """Per-frame QRE under ``params``, warm-started from ``init``."""
    w_lv, w_tv, lam_lv, lam_tv = _unpack(params)
    u_lv = np.einsum("ncij,cij->nij", batch.c_lv, w_lv)
    u_tv = np.einsum("ncij,cij->nij", batch.c_tv, w_tv)
    p_lv, p_tv, *_ = solve_qre_arrays(
        u_lv, u_tv, lam_lv[batch.bin_lv], lam_tv[batch.bin_tv],
        None if init is None else init.p_lv, None if init is None else init.p_tv, tol, max_iter,
    )
    return ProbCache(p_lv, p_tv)


def batch_accuracy(probs: ProbCache, batch: FrameBatch) -> tuple[float, float]:
    if len(batch) == 0:
        return float("nan"), float("nan")
    return (float(np.mean(np.argmax(probs.p_lv, axis=1) == batch.y_lv)),
            float(np.mean(np.argmax(probs.p_tv, axis=1) == batch.y_tv)))


def predict_accuracy(params: ModelParameters, frames, horizon: float = 1.0) -> tuple[float, float]:
    """Argmax-of-QRE accuracy per player (ties resolve to the lowest index)."""
    batch = frame_batch(frames, params, horizon)
    return batch_accuracy(equilibrium(params, batch), batch)


def kl_divergence(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    p = np.asarray(p)
    q = np.maximum(np.asarray(q), LOG_FLOOR)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(np.maximum(p, LOG_FLOOR)) - np.log(q)), 0.0)
    return terms.sum(axis=-1)


def mean_frame_kl(reference: ModelParameters, fitted: ModelParameters, frames, horizon: float = 1.0) -> float:
    """Mean over frames of KL(reference || fitted) of the joint (LV, TV) choice.

    The joint strategy is a product of marginals, so the joint KL is the sum
    of the two marginal KLs.  Each model uses its own normalization.
    """
    ref = equilibrium(reference, frame_batch(frames, reference, horizon))
    fit = equilibrium(fitted, frame_batch(frames, fitted, horizon))
    return float(np.mean(kl_divergence(ref.p_lv, fit.p_lv) + kl_divergence(ref.p_tv, fit.p_tv)))


# ---------------------------------------------------------------- EM

@dataclass
class HistoryRow:
    em_iter: int
    mean_prob_change: float
    train_nll: float
    val_accuracy_lv: float
    val_accuracy_tv: float
    best_epoch: int = 0


def split_by_episode(frames, val_fraction: float, seed: int) -> tuple[list[int], list[int]]:
    """Frame indices of a train/validation split drawn over episode ids."""
    eids = sorted({f.episode_id for f in frames})
    if val_fraction == 0 or len(eids) < 2:
        return list(range(len(frames))), []
    rng = np.random.default_rng([seed, 0xC0FFEE])
    order = rng.permutation(len(eids))
    n_val = max(1, int(round(val_fraction * len(eids))))
    val_ids = {eids[k] for k in order[:n_val]}
    train = [k for k, f in enumerate(frames) if f.episode_id not in val_ids]
    val = [k for k, f in enumerate(frames) if f.episode_id in val_ids]
    return train, val


def epoch_rng(seed: int, em_iter: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng([seed, em_iter, epoch])


def _check_finite(value: float, where: str) -> None:
    if not math.isfinite(value):
        raise CalibrationError(f"non-finite loss {value!r} at {where}")


def m_step(params, train: FrameBatch, train_cache: ProbCache, val: FrameBatch, val_cache: ProbCache,
           config: CalibrationConfig, em_iter: int):
    """Mini-batch SGD epochs; returns the snapshot with the best validation accuracy.

    Batch gradients are averaged over the batch so the step size does not
    depend on ``batch_size``.  Ties in accuracy go to the lower validation
    NLL, then to the earlier epoch.
    """
    n = len(train)
    sel = val if len(val) else train
    sel_cache = val_cache if len(val) else train_cache
    best = None
    for epoch in range(config.epochs_per_em_iter):
        order = epoch_rng(config.seed, em_iter, epoch).permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            sub = train.subset(idx)
            g = batch_mean(gradients(params, sub, train_cache.subset(idx)), sub)
            params = sgd_step(params, g, config.learning_rate)
        if config.smooth_every_epoch or epoch == config.epochs_per_em_iter - 1:
            params = regularize(params, config.smoothing_sigma)
        probs = equilibrium(params, sel, sel_cache, config.qre_tol, config.qre_max_iter)
        acc = batch_accuracy(probs, sel)
        v_nll = negative_log_likelihood(params, sel, sel_cache)
        _check_finite(v_nll, f"em_iter {em_iter} epoch {epoch}")
        key = (-(acc[0] + acc[1]), v_nll)
        if best is None or key < best[0]:
            best = (key, params, acc, epoch)
    return best[1], best[2], best[3]


def em_calibrate(frames, config: CalibrationConfig = CalibrationConfig(),
                 normalization: NormalizationConstants | None = None):
    """EM over labelled frames; returns ``(params, history)``.

    Normalization bounds are fitted on the training frames unless given.
    Stops when the mean absolute change of the per-frame strategies drops
    below ``em_tol`` or after ``em_max_iter`` iterations.
    """
    frames = list(frames)
    if not frames:
        raise ConfigurationError("em_calibrate needs at least one frame")
    train_idx, val_idx = split_by_episode(frames, config.val_fraction, config.seed)
    train_frames = [frames[k] for k in train_idx]
    val_frames = [frames[k] for k in val_idx]
    norms = normalization or fit_normalization(train_frames, config.horizon, config.norm_quantiles)
    params = initial_parameters(norms, config.bin_width, config.max_distance)
    train = frame_batch(train_frames, params, config.horizon)
    val = frame_batch(val_frames, params, config.horizon) if val_frames else train.subset([])
    train_cache = ProbCache.uniform(len(train))
    val_cache = ProbCache.uniform(len(val))
    history = []
    for it in range(config.em_max_iter):
        params, acc, best_epoch = m_step(params, train, train_cache, val, val_cache, config, it)
        new_train = equilibrium(params, train, train_cache, config.qre_tol, config.qre_max_iter)
        change = float(np.mean(np.concatenate([
            np.abs(new_train.p_lv - train_cache.p_lv).ravel(),
            np.abs(new_train.p_tv - train_cache.p_tv).ravel(),
        ])))
        train_cache = new_train
        if len(val):
            val_cache = equilibrium(params, val, val_cache, config.qre_tol, config.qre_max_iter)
        nll = negative_log_likelihood(params, train, train_cache)
        _check_finite(nll, f"em_iter {it}")
        history.append(HistoryRow(it, change, nll, acc[0], acc[1], best_epoch))
        log.info("em %d: change %.5f nll %.2f acc %.3f/%.3f", it, change, nll, *acc)
        if change < config.em_tol:
            break
    for role in PlayerRole:
        check_weights(params.w(role))
    params.metadata = {
        "seed": config.seed,
        "config_hash": config.digest(),
        "n_train_frames": len(train),
        "n_val_frames": len(val),
        "em_iterations": len(history),
        "converged": bool(history[-1].mean_prob_change < config.em_tol),
    }
    return params, history


def write_history_csv(history, path) -> None:
    fields = ["em_iter", "mean_prob_change", "train_nll", "val_accuracy_lv", "val_accuracy_tv"]
    with open(path, "w") as fh:
        fh.write(",".join(fields) + "\n")
        for row in history:
            fh.write(",".join(repr(getattr(row, f)) if isinstance(getattr(row, f), float)
                              else str(getattr(row, f)) for f in fields) + "\n")
