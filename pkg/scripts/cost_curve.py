"""Cost per independent sample c(j) = (c_pi + j c_q) / EF(j) along LIMIS and NIMIS runs.

    python3 scripts/cost_curve.py --dim 5 --c-pi 6 --c-q 1
"""

import argparse
import csv
import json
import sys

import numpy as np

from limis.harness import ExperimentConfig, run_experiment
from limis.tuning import CostModel, cost_curve, optimal_stopping_iteration


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--dim", type=int, default=5, choices=(5, 20, 80))
    p.add_argument("--replications", type=int, default=4)
    p.add_argument("--c-pi", type=float, default=6.0, help="cost of one target evaluation")
    p.add_argument("--c-q", type=float, default=1.0, help="cost of one component evaluation")
    p.add_argument("--seed", type=int, default=3)
    p.add_argument("--out", default="results/cost")
    args = p.parse_args(argv)

    w = csv.writer(sys.stdout)
    w.writerow(["method", "j", "mean_cost", "stop_at"])
    for m in ("limis", "nimis"):
        cfg = ExperimentConfig(experiment=f"mixture_{args.dim}d", method=m,
                               replications=args.replications, seed=args.seed,
                               cost_c_pi=args.c_pi, cost_c_q=args.c_q, output_dir=args.out)
        out = run_experiment(cfg)
        curves, stops = [], []
        for rep in range(args.replications):
            r = json.loads((out / f"rep_{rep:03d}.json").read_text())
            if "per_iteration_efficiency" not in r:
                continue
            model = CostModel(args.c_pi, args.c_q, r["per_iteration_efficiency"])
            curves.append(cost_curve(model))
            stops.append(optimal_stopping_iteration(model))
        n = min(len(c) for c in curves)
        mean = np.mean([c[:n] for c in curves], axis=0)
        for j in range(n):
            w.writerow([m, j + 1, mean[j], int(np.median(stops))])


if __name__ == "__main__":
    main()
