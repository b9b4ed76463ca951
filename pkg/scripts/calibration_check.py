"""Empirical size and power of the three normality tests.

For each group size, draws seeded normal groups (size) and exponential
groups (power), and reports rejection rates with the exact binomial 99%
acceptance band for the size column.

    python3 scripts/calibration_check.py [--groups 2000] [--alpha 0.05]
"""
import argparse

import numpy as np
from scipy.stats import binom

from earlybird.stats import NormalityTest, run_tests_batch


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--groups", type=int, default=2000)
    ap.add_argument("--alpha", type=float, default=0.05)
    ap.add_argument("--sizes", default="20,48,200,1000")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    lo, hi = binom.interval(0.99, args.groups, args.alpha)
    print(f"99% band for the size column: [{lo / args.groups:.4f}, {hi / args.groups:.4f}]")
    print(f"{'n':>6} {'test':18s} {'size':>8} {'power(exp)':>11}")
    for n in (int(v) for v in args.sizes.split(",")):
        rng = np.random.default_rng([args.seed, n])
        null = run_tests_batch(rng.normal(size=(args.groups, n)), args.alpha)
        alt = run_tests_batch(rng.exponential(size=(args.groups, n)), args.alpha)
        for t in NormalityTest:
            size = null[t].reject.mean()
            flag = "" if lo <= null[t].reject.sum() <= hi else "  outside band"
            print(f"{n:>6} {t.value:18s} {size:8.4f} {alt[t].reject.mean():11.4f}{flag}")


if __name__ == "__main__":
    main()
