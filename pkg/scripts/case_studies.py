"""Run both named case scenarios in every decision mode and print the outcomes.

    python3 scripts/case_studies.py [--params reference] [--out case_studies.json]
"""
from __future__ import annotations

import argparse
import json

from leftturn.cli import load_params
from leftturn.scenario import CASE_STUDIES
from leftturn.sim import Mode, SimConfig, run_episode


def _fmt(x, spec=".2f"):
    return "-" if x is None else format(x, spec)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--params", default="reference", help="params JSON or a bundled name")
    ap.add_argument("--out", help="optional JSON file with the full results")
    args = ap.parse_args(argv)
    params, _ = load_params(args.params)

    results = {}
    print(f"{'case':14s} {'mode':5s} {'SCT[s]':>7s} {'PET[s]':>7s} {'fuel[mL]':>9s} first  collided")
    for name, sc in sorted(CASE_STUDIES.items()):
        for mode in Mode:
            r = run_episode(sc, params, SimConfig(mode=mode))
            first = r.first_to_conflict.value if r.first_to_conflict else "-"
            print(f"{name:14s} {mode.value:5s} {_fmt(r.completion_time, '.1f'):>7s} {_fmt(r.pet):>7s} "
                  f"{r.fuel_total:9.2f} {first:5s}  {r.collided}")
            results[f"{name}/{mode.value}"] = r.to_dict()
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(results, fh, indent=1, sort_keys=True)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
