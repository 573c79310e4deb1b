"""Shared oracles: random frame batches and central finite differences."""
import numpy as np

from leftturn.calibration import FrameBatch, ProbCache, negative_log_likelihood
from leftturn.game import PlayerRole
from leftturn.params import initial_parameters
from leftturn.qre import RationalityProfile


def toy_batch(rng, n, bins=20):
    return FrameBatch(
        rng.uniform(0, 1, size=(n, 3, 3, 5)),
        rng.uniform(0, 1, size=(n, 3, 3, 5)),
        rng.integers(0, 3, size=n),
        rng.integers(0, 5, size=n),
        rng.integers(0, bins, size=n),
        rng.integers(0, bins, size=n),
        [f"e{k % 4}" for k in range(n)],
    )


def toy_cache(rng, n):
    p = rng.dirichlet(np.ones(3), size=n)
    q = rng.dirichlet(np.ones(5), size=n)
    return ProbCache(p, q)


def random_params(rng, norms, lam_hi=5.0):
    p = initial_parameters(norms)
    for role in PlayerRole:
        w = rng.uniform(0.05, 1, size=(3, 3, 5))
        p.weights[role] = w / w.sum(axis=0)
        p.rationality[role] = RationalityProfile(rng.uniform(0.1, lam_hi, size=20))
    return p


def finite_difference(params, batch, cache, h=1e-5):
    """Central differences for every weight entry and every lambda bin."""
    out = {}
    for role in PlayerRole:
        w = params.w(role)
        gw = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            plus, minus = params.copy(), params.copy()
            plus.weights[role][idx] += h
            minus.weights[role][idx] -= h
            gw[idx] = (negative_log_likelihood(plus, batch, cache) - negative_log_likelihood(minus, batch, cache)) / (2 * h)
        lam = params.lam(role).values
        gl = np.zeros_like(lam)
        for k in range(len(lam)):
            vp, vm = lam.copy(), lam.copy()
            vp[k] += h
            vm[k] -= h
            plus, minus = params.copy(), params.copy()
            plus.rationality[role] = params.lam(role).with_values(vp)
            minus.rationality[role] = params.lam(role).with_values(vm)
            gl[k] = (negative_log_likelihood(plus, batch, cache) - negative_log_likelihood(minus, batch, cache)) / (2 * h)
        out[role] = (gw, gl)
    return out


def rel_err(a, b):
    return np.abs(a - b).max() / max(np.abs(b).max(), 1e-8)
