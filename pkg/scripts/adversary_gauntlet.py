#!/usr/bin/env python3
"""Run the four adversarial drills and exit nonzero if any attack lands."""

import argparse
import sys

from pbts.sim.games import run_all_games


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--quick", action="store_true", help="reduced trial budgets")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    results = run_all_games(quick=args.quick, seed=args.seed)
    for r in results:
        print(r.line())
        if not r.passed:
            print(f"  witness: {r.details.get('witness')}")
    return 0 if all(r.passed for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
