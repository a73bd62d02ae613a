#!/usr/bin/env python3
"""(1/n) D_H and (1/n) D_max-smooth of i.i.d. diagonal pairs against the Gaussian approximation."""
import argparse

import numpy as np

from qbcast import oneshot


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=float, nargs="+", default=[0.5, 0.5])
    ap.add_argument("--q", type=float, nargs="+", default=[0.9, 0.1])
    ap.add_argument("--eps", type=float, default=0.1)
    ap.add_argument("--nmax", type=int, default=12)
    args = ap.parse_args()

    rows = oneshot.second_order_diag(np.diag(args.p), np.diag(args.q), args.eps, args.nmax)
    print(f"D = {rows[0]['D']:.6f}  V = {rows[0]['V']:.6f}  eps = {args.eps}")
    print(f"{'n':>3} {'D_H/n':>9} {'gauss':>9} {'Dmax/n':>9} {'gauss':>9}")
    for r in rows:
        print(f"{r['n']:>3} {r['dh_rate']:>9.4f} {r['dh_gaussian']:>9.4f} "
              f"{r['dmax_rate']:>9.4f} {r['dmax_gaussian']:>9.4f}")


if __name__ == "__main__":
    main()
