"""Monte-Carlo comparison of QRE, QRE0 and NE on paired random scenarios.

Prints the RTTC-binned table and, with ``--out``, writes the same summary
CSV that ``leftturn batch`` produces.

    python3 scripts/monte_carlo.py [--n 1000] [--seed 2025] [--params reference]
"""
from __future__ import annotations

import argparse
import time

from leftturn.cli import load_params
from leftturn.montecarlo import MODES, BatchConfig, monte_carlo, paired_design_ok, write_summary_csv


def _cell(x):
    return "    -" if x is None else f"{x:5.2f}"


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=2025)
    ap.add_argument("--params", default="reference")
    ap.add_argument("--out", help="summary CSV path")
    ap.add_argument("--check", action="store_true", help="count invariant violations along every trace")
    args = ap.parse_args(argv)
    params, _ = load_params(args.params)

    t0 = time.perf_counter()
    result = monte_carlo(params, BatchConfig(check_invariants=args.check), args.n, args.seed)
    elapsed = time.perf_counter() - t0

    modes = "/".join(m.value for m in MODES)
    print(f"{'RTTC':>9s}  SCT {modes:<17s}     fuel {modes:<17s}     collisions  samples")
    for r in result.rows:
        sct = " ".join(_cell(r.sct[m]) for m in MODES)
        fuel = " ".join(_cell(r.fuel[m]) for m in MODES)
        col = "/".join(str(r.collisions[m]) for m in MODES)
        print(f"{r.rttc:>9s}  {sct} {r.sct_stars:3s}  {fuel} {r.fuel_stars:3s}  {col:>10s}  {r.samples:7d}")
    print(f"paired design: {paired_design_ok(result)}; {args.n} scenarios x {len(MODES)} modes in {elapsed:.1f}s")
    if args.check:
        print(f"invariant violations: {result.violations()}")
    if args.out:
        write_summary_csv(result.rows, args.out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
