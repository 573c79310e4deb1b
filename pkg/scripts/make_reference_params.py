"""Build the bundled generator and reference parameter files.

The generator is a hand-set ground truth whose TV yields more readily
under hard braking and whose rationality rises near the conflict point.
The reference parameters are what ``em_calibrate`` recovers from a fixed
synthetic dataset drawn from the generator.

    python3 scripts/make_reference_params.py [--episodes 200] [--seed 2024]
"""
from __future__ import annotations

import argparse
import logging
from pathlib import Path

import numpy as np

from leftturn.calibration import CalibrationConfig, em_calibrate, fit_normalization, mean_frame_kl
from leftturn.data import all_frames, generate_synthetic
from leftturn.game import NormalizationConstants, PlayerRole, RoleNorms
from leftturn.params import ModelParameters, initial_parameters
from leftturn.qre import RationalityProfile
from leftturn.scenario import CASE_STUDIES
from leftturn.sim import Mode, SimConfig, run_episode

RESOURCES = Path(__file__).resolve().parents[1] / "src" / "leftturn" / "resources"
PILOT_SEED = 99
PILOT_EPISODES = 150
QUANTILES = (0.05, 0.95)


def rule_ramp(safety_efficiency, r_lo, r_span, axis, n):
    """Rule weight r_lo + r_span at the hardest-braking action, falling linearly to r_lo.

    The remainder is split between safety and efficiency in a fixed ratio.
    """
    x = 1.0 - np.arange(n) / (n - 1)
    shape = [1, 1]
    shape[axis] = n
    w_rule = (r_lo + r_span * x).reshape(shape) * np.ones((3, 5))
    s, e = safety_efficiency
    w = np.empty((3, 3, 5))
    w[0] = (1 - w_rule) * s / (s + e)
    w[1] = (1 - w_rule) * e / (s + e)
    w[2] = w_rule
    return w


def pilot_normalization() -> NormalizationConstants:
    # lambda = 0 makes the pilot rollout independent of the weights and norms
    dummy = NormalizationConstants(RoleNorms(0, 1, -1, 0), RoleNorms(0, 1, -1, 0))
    pilot = initial_parameters(dummy, lam=0.0)
    frames = all_frames(generate_synthetic(pilot, PILOT_EPISODES, PILOT_SEED))
    return fit_normalization(frames, quantiles=QUANTILES)


def generator(norms: NormalizationConstants) -> ModelParameters:
    d = np.arange(20) * 2.0 + 1.0
    w_lv = np.broadcast_to(np.array([0.6, 0.3, 0.1])[:, None, None], (3, 3, 5)).copy()
    w_tv = rule_ramp((0.6, 0.3), 0.1, 0.8, axis=1, n=5)
    lam_lv = 2.0 + 3.0 * np.exp(-(((d - 12.0) / 8.0) ** 2))
    lam_tv = 2.0 + 4.0 * np.exp(-d / 10.0)
    return ModelParameters(
        {PlayerRole.LV: w_lv, PlayerRole.TV: w_tv},
        {PlayerRole.LV: RationalityProfile(lam_lv), PlayerRole.TV: RationalityProfile(lam_tv)},
        norms,
        {"source": "hand-set generator", "pilot_seed": PILOT_SEED, "pilot_episodes": PILOT_EPISODES,
         "quantiles": list(QUANTILES)},
    )


def check_cases(params: ModelParameters, label: str) -> bool:
    ok = True
    for mode in (Mode.QRE, Mode.NE):
        for name, sc in CASE_STUDIES.items():
            r = run_episode(sc, params, SimConfig(mode=mode))
            good = (not r.collided and r.completion_time is not None and r.pet is not None and r.pet > 0)
            if name.endswith("2"):
                good = good and r.first_to_conflict is PlayerRole.LV
            ok &= good
            print(f"{label:9s} {mode.value:4s} {name}: SCT={r.completion_time} PET={r.pet} "
                  f"first={r.first_to_conflict} {'ok' if good else 'FAIL'}")
    return ok


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--episodes", type=int, default=200)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--out", type=Path, default=RESOURCES)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    gen = generator(pilot_normalization())
    gen.validate()
    args.out.mkdir(parents=True, exist_ok=True)
    gen.save(args.out / "generator_params.json")
    frames = all_frames(generate_synthetic(gen, args.episodes, args.seed))
    print(f"{len(frames)} frames from {args.episodes} episodes")
    fitted, history = em_calibrate(frames, CalibrationConfig())
    fitted.metadata.update({"dataset_seed": args.seed, "dataset_episodes": args.episodes})
    fitted.save(args.out / "reference_params.json")
    for row in history:
        print(row)
    print(f"mean KL generator||fitted = {mean_frame_kl(gen, fitted, frames):.4f}")
    ok = check_cases(gen, "generator") & check_cases(fitted, "reference")
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
