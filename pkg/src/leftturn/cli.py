"""Command-line entry point: calibrate, simulate, batch, gen and replay.

Every command writes a ``manifest.json`` next to its outputs recording the
arguments, configuration, input hashes, seed and version.  ``replay`` reruns
a manifest into a fresh directory.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .calibration import CalibrationConfig, CalibrationError, em_calibrate, write_history_csv
from .data import (
    DataConfig,
    DataError,
    SyntheticConfig,
    all_frames,
    generate_synthetic,
    load_episodes,
    load_frames_csv,
    sniff_format,
    write_episodes_csv,
    write_frames_csv,
)
from .game import ConfigurationError, PlayerRole
from .montecarlo import BatchConfig, monte_carlo, paired_design_ok, write_summary_csv
from .params import ModelParameters, generator_parameters, reference_parameters
from .paths import PathError
from .scenario import CASE_STUDIES, Scenario
from .sim import Mode, PreconditionError, SimConfig, run_episode

log = logging.getLogger("leftturn")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_LOSS, EXIT_PRECONDITION = 0, 1, 2, 3, 4
BUILTIN_PARAMS = {"reference": reference_parameters, "generator": generator_parameters}
MANIFEST = "manifest.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _require_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"no such file: {p}")
    return p


def load_params(spec: str) -> tuple[ModelParameters, dict]:
    """Parameters from a JSON path or a bundled name; returns the input-hash entry too."""
    if spec in BUILTIN_PARAMS:
        params = BUILTIN_PARAMS[spec]()
        return params, {f"builtin:{spec}": params.digest()}
    p = _require_file(spec)
    try:
        params = ModelParameters.load(p)
        params.validate()
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"{p}: invalid parameter file ({exc})") from None
    return params, {str(p.resolve()): sha256_file(p)}


def load_json_config(path, cls, what: str):
    if path is None:
        return cls(), {}
    p = _require_file(path)
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{p}: {exc}") from None
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise DataError(f"{p}: unknown {what} keys {unknown}")
    for name, value in raw.items():
        if isinstance(value, list):
            raw[name] = tuple(value)
    try:
        return cls(**raw), {str(p.resolve()): sha256_file(p)}
    except (TypeError, ValueError) as exc:
        raise DataError(f"{p}: {exc}") from None


def _snapshot(obj) -> dict:
    def conv(v):
        if isinstance(v, Mode):
            return v.value
        if dataclasses.is_dataclass(v):
            return {k: conv(x) for k, x in dataclasses.asdict(v).items()}
        if isinstance(v, (tuple, list)):
            return [conv(x) for x in v]
        return v
    return conv(obj)


def write_manifest(path: Path, command: str, args: dict, config: dict, inputs: dict, seed, outputs) -> None:
    manifest = {
        "command": command,
        "args": args,
        "config": config,
        "inputs": inputs,
        "seed": seed,
        "version": __version__,
        "outputs": sorted(outputs),
    }
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- commands

def cmd_calibrate(args) -> int:
    data = _require_file(args.data)
    config, cfg_hash = load_json_config(args.config, CalibrationConfig, "calibration config")
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    if sniff_format(data) == "episodes":
        frames = all_frames(load_episodes(data, DataConfig()))
    else:
        frames = load_frames_csv(data)
    if not frames:
        raise DataError(f"{data}: no usable decision frames")
    out = _out_dir(args.out)
    params, history = em_calibrate(frames, config)
    params.save(out / "params.json")
    write_history_csv(history, out / "history.csv")
    write_manifest(out / MANIFEST, "calibrate",
                   {"data": str(data.resolve()), "config": args.config and str(Path(args.config).resolve()),
                    "seed": config.seed},
                   _snapshot(config), {str(data.resolve()): sha256_file(data), **cfg_hash},
                   config.seed, ["params.json", "history.csv"])
    return EXIT_OK


def parse_scenario(spec: str) -> tuple[Scenario, dict]:
    if spec in CASE_STUDIES:
        return CASE_STUDIES[spec], {}
    p = Path(spec)
    if not p.is_file():
        raise UsageError(f"scenario must be one of {sorted(CASE_STUDIES)} or a JSON file, got {spec!r}")
    try:
        return Scenario.from_dict(json.loads(p.read_text())), {str(p.resolve()): sha256_file(p)}
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{p}: invalid scenario ({exc})") from None


def write_profile_csv(result, path) -> None:
    n_p = 5
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "role", "d_conf", "speed", "accel"] + [f"p{k}" for k in range(n_p)])
        for role, tr in ((PlayerRole.LV, result.lv), (PlayerRole.TV, result.tv)):
            for t, d, v, a, p in zip(tr.t, tr.d_conf, tr.speed, tr.accel, tr.probs):
                probs = [repr(x) for x in p] if p is not None else []
                probs += [""] * (n_p - len(probs))
                w.writerow([repr(t), role.value, repr(d), repr(v), "" if a is None else repr(a)] + probs)


def cmd_simulate(args) -> int:
    params, inputs = load_params(args.params)
    scenario, sc_hash = parse_scenario(args.scenario)
    config = SimConfig(mode=Mode(args.mode))
    result = run_episode(scenario, params, config)
    out = _out_dir(args.out)
    result_dict = result.to_dict()
    result_dict["scenario"] = scenario.to_dict()
    (out / "result.json").write_text(json.dumps(result_dict, indent=1, sort_keys=True) + "\n")
    write_profile_csv(result, out / "profile.csv")
    write_manifest(out / MANIFEST, "simulate",
                   {"params": _arg_path(args.params), "scenario": _arg_path(args.scenario, CASE_STUDIES),
                    "mode": args.mode},
                   _snapshot(config), {**inputs, **sc_hash}, None, ["result.json", "profile.csv"])
    log.info("SCT %s PET %s collided %s", result.completion_time, result.pet, result.collided)
    return EXIT_OK


def cmd_batch(args) -> int:
    params, inputs = load_params(args.params)
    config = BatchConfig()
    result = monte_carlo(params, config, args.n, args.seed)
    if not paired_design_ok(result):
        raise RuntimeError("scenario draws differ across modes")
    out = _out_dir(args.out)
    write_summary_csv(result.rows, out / "summary.csv")
    write_manifest(out / MANIFEST, "batch",
                   {"params": _arg_path(args.params), "n": args.n, "seed": args.seed},
                   {**_snapshot(config), "modes": [m.value for m in Mode]}, inputs, args.seed, ["summary.csv"])
    return EXIT_OK


def cmd_gen(args) -> int:
    params, inputs = load_params(args.params)
    config = SyntheticConfig()
    episodes = generate_synthetic(params, args.n, args.seed, config=config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_episodes_csv(episodes, out)
    outputs = [out.name]
    if args.frames_out:
        # frames as re-derived from the written tracks, i.e. what calibrate will see
        frames_path = out.with_name(out.stem + ".frames.csv")
        frames = [f for ep in load_episodes(out) for f in ep.frames]
        write_frames_csv(frames, frames_path)
        outputs.append(frames_path.name)
    write_manifest(out.with_name(out.name + ".manifest.json"), "gen",
                   {"params": _arg_path(args.params), "n": args.n, "seed": args.seed,
                    "frames_out": bool(args.frames_out)},
                   _snapshot(config), inputs, args.seed, outputs)
    return EXIT_OK


def _arg_path(value: str, names=BUILTIN_PARAMS) -> str:
    return value if value in names else str(Path(value).resolve())


def replay_argv(manifest: dict, out: str) -> list[str]:
    cmd = manifest["command"]
    a = manifest["args"]
    if cmd == "calibrate":
        argv = ["calibrate", "--data", a["data"], "--seed", str(a["seed"])]
        if a.get("config"):
            argv += ["--config", a["config"]]
        return argv + ["--out", out]
    if cmd == "simulate":
        return ["simulate", "--params", a["params"], "--scenario", a["scenario"], "--mode", a["mode"], "--out", out]
    if cmd == "batch":
        return ["batch", "--params", a["params"], "--n", str(a["n"]), "--seed", str(a["seed"]), "--out", out]
    if cmd == "gen":
        argv = ["gen", "--params", a["params"], "--n", str(a["n"]), "--seed", str(a["seed"])]
        return argv + (["--frames-out"] if a.get("frames_out") else []) + ["--out", out]
    raise DataError(f"manifest has unknown command {cmd!r}")


def cmd_replay(args) -> int:
    path = _require_file(args.manifest)
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: {exc}") from None
    for name, digest in manifest.get("inputs", {}).items():
        if name.startswith("builtin:"):
            current = BUILTIN_PARAMS[name.split(":", 1)[1]]().digest()
        else:
            current = sha256_file(_require_file(name))
        if current != digest:
            raise DataError(f"input {name} changed since the manifest was written")
    return main(replay_argv(manifest, args.out))


# ---------------------------------------------------------------- parser

def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="leftturn", description="Left-turn interaction game: calibration and simulation.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("calibrate", help="fit payoff weights and rationality profiles by EM")
    p.add_argument("--data", required=True, help="episode CSV or frame CSV")
    p.add_argument("--config", help="calibration config JSON (defaults if omitted)")
    p.add_argument("--seed", type=_seed, help="overrides the config seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("simulate", help="run one interaction")
    p.add_argument("--params", required=True, help="params JSON, or 'reference' / 'generator'")
    p.add_argument("--scenario", required=True, help=f"scenario JSON or one of {sorted(CASE_STUDIES)}")
    p.add_argument("--mode", required=True, choices=[m.value for m in Mode])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("batch", help="Monte-Carlo comparison of all modes")
    p.add_argument("--params", required=True)
    p.add_argument("--n", type=_positive_int, default=1000)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("gen", help="synthetic episodes in the episode CSV schema")
    p.add_argument("--params", required=True)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--out", required=True, help="episode CSV path")
    p.add_argument("--frames-out", action="store_true", help="also write <stem>.frames.csv")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("replay", help="rerun a manifest into a new directory")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_replay)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"leftturn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ConfigurationError, PathError, FileNotFoundError) as exc:
        print(f"leftturn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CalibrationError as exc:
        print(f"leftturn: calibration failed: {exc}", file=sys.stderr)
        return EXIT_LOSS
    except PreconditionError as exc:
        print(f"leftturn: precondition violated: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    raise SystemExit(main())
