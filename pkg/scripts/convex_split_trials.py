#!/usr/bin/env python3
"""Seeded convex-split trials: divergence bound per copy count, then the distance clause."""
import argparse
import math

import numpy as np

from qbcast import splitlemmas as sl


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=20, help="instances per copy count")
    ap.add_argument("--nmax", type=int, default=8)
    ap.add_argument("--delta", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)

    print(f"{'n':>3} {'passed':>8} {'min slack':>12} {'mean lhs':>10} {'mean bound':>11}")
    for n in range(2, args.nmax + 1):
        reps = [sl.verify_convex_split(sl.random_convex_split_instance(rng, n))
                for _ in range(args.trials)]
        print(f"{n:>3} {sum(r.passed for r in reps):>5}/{len(reps):<2} "
              f"{min(r.slack for r in reps):>12.3e} {np.mean([r.lhs for r in reps]):>10.4f} "
              f"{np.mean([r.bound for r in reps]):>11.4f}")

    print(f"\nlow-k instances at delta={args.delta}:")
    worst = -math.inf
    for _ in range(args.trials):
        inst = sl.engineered_instance(rng, delta=args.delta)
        sub = sl.verify_convex_split(inst, delta=args.delta).details["distance"]
        worst = max(worst, sub.lhs)
        print(f"  k={inst.k:.3f} n={inst.n:>2} distance={sub.lhs:.4f} passed={sub.passed}")
    print(f"largest distance {worst:.4f} vs delta {args.delta}")


if __name__ == "__main__":
    main()
