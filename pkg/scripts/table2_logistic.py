"""Sonar logistic regression: RMSE of posterior means, sds and c against a pooled reference.

    python3 scripts/table2_logistic.py --replications 8 --scale desk
"""

import argparse
import csv
import sys

from limis.harness import ExperimentConfig, run_experiment


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--methods", nargs="+", default=["limis", "nimis", "is", "mala"])
    p.add_argument("--replications", type=int, default=8)
    p.add_argument("--scale", default="desk", choices=("desk", "paper"))
    p.add_argument("--lam", type=float, default=28.0)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="results/table2")
    args = p.parse_args(argv)

    w = csv.writer(sys.stdout)
    w.writerow(["method", "metric", "value", "bias2_over_mse", "minimum"])
    for m in args.methods:
        cfg = ExperimentConfig(experiment="logistic_sonar", method=m, scale=args.scale,
                               replications=args.replications, seed=args.seed, lam=args.lam,
                               workers=args.workers, output_dir=args.out)
        out = run_experiment(cfg)
        with open(out / "summary.csv", newline="") as fh:
            for r in csv.DictReader(fh):
                w.writerow([m, r["metric"], r["value"], r["bias2_over_mse"], r["minimum"]])


if __name__ == "__main__":
    main()
