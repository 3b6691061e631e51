"""t1 tuning on the d=5 mixture: pilot at several t1_I, optimise, compare efficiencies.

    python3 scripts/figure4_tuning.py --t1 0.1 1 10 --replications 5
"""

import argparse
import csv
import json
import sys

from limis.harness import ExperimentConfig, run_experiment


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--t1", type=float, nargs="+", default=[0.1, 1.0, 10.0])
    p.add_argument("--replications", type=int, default=5)
    p.add_argument("--criterion", default="auto",
                   choices=("auto", "normalized_variance", "self_normalized_variance",
                            "kl_divergence"))
    p.add_argument("--seed", type=int, default=88)
    p.add_argument("--out", default="results/figure4")
    args = p.parse_args(argv)

    w = csv.writer(sys.stdout)
    w.writerow(["t1_initial", "replication", "t1_star", "ef_initial", "ef_star"])
    for t1 in args.t1:
        cfg = ExperimentConfig(experiment="tune_t1", t1=t1, replications=args.replications,
                               seed=args.seed, criterion=args.criterion,
                               output_dir=f"{args.out}/t1_{t1:g}")
        out = run_experiment(cfg)
        for rep in range(args.replications):
            r = json.loads((out / f"rep_{rep:03d}.json").read_text())
            if "tuning" in r:
                t = r["tuning"]
                w.writerow([t1, rep, t["t1_star"], t["ef_initial"], t["ef_star"]])


if __name__ == "__main__":
    main()
