#!/usr/bin/env python3
"""Asymptotic and one-shot regions along a noise family, written as CSV."""
import argparse
import sys

import numpy as np

from qbcast import regions


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--family", default="depolarizing", choices=sorted(regions.FAMILIES))
    ap.add_argument("--points", type=int, default=11)
    ap.add_argument("--which", default="asymptotic",
                    choices=["asymptotic", "classical", "converse", "achievability"])
    ap.add_argument("--eps", type=float, default=0.1, help="converse smoothing")
    ap.add_argument("--out", default="-")
    args = ap.parse_args()

    budget = regions.EpsilonBudget(0.05, 0.2, 0.04, 0.04, 0.04, 0.039) \
        if args.which == "achievability" else None
    grid = np.linspace(0.0, 0.7, args.points)
    rows = regions.scan(args.family, grid, args.which, budget=budget, eps=args.eps)
    if args.out == "-":
        regions.rows_to_csv(rows, args.which, sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            regions.rows_to_csv(rows, args.which, fh)
        print(f"wrote {len(rows)} rows to {args.out}", file=sys.stderr)


if __name__ == "__main__":
    main()
