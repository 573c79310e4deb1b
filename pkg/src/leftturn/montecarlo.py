"""Monte-Carlo comparison of the three decision modes on paired random scenarios."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .game import LV_ACTIONS, TV_ACTIONS
from .params import ModelParameters
from .scenario import Scenario, sample_scenario
from .sim import Mode, SimConfig, SimulationResult, advance, rationality_weight, run_episode

MODES = (Mode.QRE, Mode.QRE0, Mode.NE)
SCENARIO_STREAM = 0x5CE7  # named sub-stream of the batch seed
N_RTTC_BINS = 10
ALL_LABEL = "All cases"


@dataclass(frozen=True)
class BatchConfig:
    sim: SimConfig = SimConfig()
    speed_kmh: tuple[float, float] = (10.0, 36.0)
    dist_m: tuple[float, float] = (10.0, 40.0)
    check_invariants: bool = False


@dataclass(frozen=True)
class EpisodeSummary:
    index: int
    mode: Mode
    scenario: tuple[float, float, float, float]
    rttc: float
    completion_time: float | None
    fuel: float
    pet: float | None
    collided: bool
    timed_out: bool
    violations: int = 0

    @property
    def completed(self) -> bool:
        return self.completion_time is not None and not self.collided


@dataclass(frozen=True)
class SummaryRow:
    rttc: str
    sct: dict
    fuel: dict
    sct_stars: str
    fuel_stars: str
    collisions: dict
    timeouts: dict
    samples: int


@dataclass
class BatchResult:
    seed: int
    n: int
    episodes: dict[Mode, list[EpisodeSummary]] = field(default_factory=dict)
    rows: list[SummaryRow] = field(default_factory=list)

    def violations(self) -> int:
        return sum(e.violations for eps in self.episodes.values() for e in eps)


def scenario_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), SCENARIO_STREAM])


def draw_scenarios(n: int, seed: int, config: BatchConfig = BatchConfig()) -> list[Scenario]:
    rng = scenario_rng(seed)
    return [sample_scenario(rng, config.speed_kmh, config.dist_m) for _ in range(n)]


def rttc_bin(rttc: float) -> int:
    """Initial RTTC rounded half-up to an integer; everything from 10 s is one bin."""
    return min(int(math.floor(rttc + 0.5)), N_RTTC_BINS)


def bin_label(b: int) -> str:
    return ">=10" if b >= N_RTTC_BINS else str(b)


def significance_stars(p: float) -> str:
    if not np.isfinite(p):
        return ""
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def welch_stars(a, b) -> str:
    a, b = np.asarray(a, float), np.asarray(b, float)
    if len(a) < 2 or len(b) < 2:
        return ""
    # identical constant samples give a nan statistic; no evidence either way
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        p = stats.ttest_ind(a, b, equal_var=False).pvalue
    return significance_stars(float(p))


def episode_violations(result: SimulationResult, config: SimConfig) -> int:
    """Count speed-bound, kinematic, alpha and acceleration-range violations along the traces."""
    bad = 0
    for trace, actions in ((result.lv, LV_ACTIONS), (result.tv, TV_ACTIONS)):
        for v, a, travel, d, p in zip(trace.speed, trace.accel, trace.travel, trace.d_conf, trace.probs):
            if not 0.0 <= v <= config.v_max:
                bad += 1
            if a is None:
                continue
            if not actions.min <= a <= actions.max:
                bad += 1
            _, expect = advance(v, a, config.dt, config.v_max)
            if abs(expect - travel) > 1e-12:
                bad += 1
            if p is not None:
                alpha = rationality_weight(d, config.k, config.d0)
                if not 0.0 < alpha <= 1.0:
                    bad += 1
        if trace.speed and not 0.0 <= trace.speed[-1] <= config.v_max:
            bad += 1
    return bad


def summarize_episode(index: int, scenario: Scenario, result: SimulationResult, mode: Mode,
                      violations: int = 0) -> EpisodeSummary:
    key = (scenario.lv_speed, scenario.lv_dist, scenario.tv_speed, scenario.tv_dist)
    return EpisodeSummary(index, mode, key, scenario.initial_rttc, result.completion_time,
                          result.fuel_total, result.pet, result.collided, result.timed_out, violations)


def _mean(xs) -> float | None:
    return float(np.mean(xs)) if len(xs) else None


def summary_rows(episodes: dict[Mode, list[EpisodeSummary]]) -> list[SummaryRow]:
    """One row per RTTC bin plus the all-cases row.

    Time and fuel means use completed episodes only; collisions and
    timeouts are counted separately.
    """
    n = len(episodes[MODES[0]])
    bins = [rttc_bin(e.rttc) for e in episodes[MODES[0]]]
    groups = [(bin_label(b), [k for k in range(n) if bins[k] == b]) for b in range(N_RTTC_BINS + 1)]
    groups.append((ALL_LABEL, list(range(n))))
    rows = []
    for label, idx in groups:
        sel = {m: [episodes[m][k] for k in idx] for m in MODES}
        done = {m: [e for e in sel[m] if e.completed] for m in MODES}
        sct = {m: [e.completion_time for e in done[m]] for m in MODES}
        fuel = {m: [e.fuel for e in done[m]] for m in MODES}
        rows.append(SummaryRow(
            rttc=label,
            sct={m: _mean(sct[m]) for m in MODES},
            fuel={m: _mean(fuel[m]) for m in MODES},
            sct_stars=welch_stars(sct[Mode.QRE], sct[Mode.NE]),
            fuel_stars=welch_stars(fuel[Mode.QRE], fuel[Mode.NE]),
            collisions={m: sum(e.collided for e in sel[m]) for m in MODES},
            timeouts={m: sum(e.timed_out for e in sel[m]) for m in MODES},
            samples=len(idx),
        ))
    return rows


def monte_carlo(params: ModelParameters, config: BatchConfig = BatchConfig(), n: int = 1000,
                seed: int = 0) -> BatchResult:
    """Run every mode on the same ``n`` random scenarios and tabulate by initial RTTC.

    Each mode re-draws its scenarios from the same named stream, so the
    paired design can be verified rather than assumed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    out = BatchResult(seed, n)
    for mode in MODES:
        sim_cfg = SimConfig(**{**config.sim.__dict__, "mode": mode})
        summaries = []
        for k, sc in enumerate(draw_scenarios(n, seed, config)):
            res = run_episode(sc, params, sim_cfg)
            bad = episode_violations(res, sim_cfg) if config.check_invariants else 0
            summaries.append(summarize_episode(k, sc, res, mode, bad))
        out.episodes[mode] = summaries
    out.rows = summary_rows(out.episodes)
    return out


def paired_design_ok(result: BatchResult) -> bool:
    ref = [e.scenario for e in result.episodes[MODES[0]]]
    return all([e.scenario for e in result.episodes[m]] == ref for m in MODES[1:])


def _fmt(x) -> str:
    return "" if x is None else f"{x:.4f}"


SUMMARY_FIELDS = (
    ["rttc"]
    + [f"sct_{m.value}" for m in MODES] + ["sct_sig"]
    + [f"fuel_{m.value}" for m in MODES] + ["fuel_sig"]
    + [f"collisions_{m.value}" for m in MODES]
    + [f"timeouts_{m.value}" for m in MODES]
    + ["samples"]
)


def write_summary_csv(rows: list[SummaryRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for r in rows:
            w.writerow(
                [r.rttc]
                + [_fmt(r.sct[m]) for m in MODES] + [r.sct_stars]
                + [_fmt(r.fuel[m]) for m in MODES] + [r.fuel_stars]
                + [r.collisions[m] for m in MODES]
                + [r.timeouts[m] for m in MODES]
                + [r.samples]
            )


def read_summary_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
