"""Clean-data error against n for the STV mean estimator and the sample-mean oracle.

Usage: python scripts/rate_check.py [--d 10] [--trials 10] [--n-grid 250,500,1000,2000,4000]
"""

import argparse
import os
import warnings

from stvlearn.bench import run_rate_check
from stvlearn.estimators import StvLearnConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d", type=int, default=10)
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-grid", default="250,500,1000,2000,4000")
    args = ap.parse_args()
    grid = [int(v) for v in args.n_grid.split(",")]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        learn = StvLearnConfig.from_penalties(3e-5, 1e-4)
    print("| estimator | " + " | ".join(f"n={n}" for n in grid) + " | slope |")
    print("|---|" + "---|" * (len(grid) + 1))
    for est in ("stv", "mean", "median"):
        res = run_rate_check(args.d, grid, args.trials, learn, args.seed, estimator=est, workers=os.cpu_count())
        row = " | ".join(f"{e:.4f}" for e in res.mean_errors)
        print(f"| {est} | {row} | {res.slope:.3f} |", flush=True)


if __name__ == "__main__":
    main()
