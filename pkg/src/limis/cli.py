"""Command line: ``limis run``, ``limis tune-t1`` and ``limis plot-data``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .harness import (EXPERIMENTS, METHODS, ExperimentConfig, emit_plot_data, parse_config_file,
                      run_experiment, tune_from_pilot)

CRITERION_FLAGS = {"v": "self_normalized_variance", "vtilde": "normalized_variance",
                   "kl": "kl_divergence", "auto": "auto"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="limis", description="Langevin incremental mixture IS experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run replications of one experiment/method pair")
    r.add_argument("--config", help="key = value file; command-line flags take precedence")
    r.add_argument("--experiment", choices=EXPERIMENTS)
    r.add_argument("--method", choices=METHODS)
    r.add_argument("--scale", choices=("desk", "paper"))
    r.add_argument("--replications", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--t1", type=float)
    r.add_argument("--lam", type=float, help="ridge penalty of the logistic posterior")
    r.add_argument("--n0", type=int)
    r.add_argument("--b", type=int)
    r.add_argument("--k", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--mala-init", dest="mala_init", choices=("prior", "mode"))
    r.add_argument("--sonar", dest="sonar_path")
    r.add_argument("--out", dest="output_dir")

    t = sub.add_parser("tune-t1", help="optimise t1 from stored LIMIS pilot runs")
    t.add_argument("--pilot", required=True)
    t.add_argument("--criterion", choices=tuple(CRITERION_FLAGS), default="auto")
    t.add_argument("--out")

    d = sub.add_parser("plot-data", help="write plot-ready CSVs from completed runs")
    d.add_argument("--in", dest="results_dir", required=True)
    d.add_argument("--out")
    return p


def config_from_args(args) -> ExperimentConfig:
    values = parse_config_file(args.config) if args.config else {}
    for key in ("experiment", "method", "scale", "replications", "seed", "t1", "lam", "n0", "b",
                "k", "workers", "mala_init", "sonar_path", "output_dir"):
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    if "experiment" not in values:
        raise SystemExit("limis run: --experiment is required (flag or config file)")
    return ExperimentConfig(**values)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        out = run_experiment(config_from_args(args))
        print(out / "summary.csv")
        print((out / "summary.csv").read_text(encoding="utf-8"), end="")
    elif args.command == "tune-t1":
        out = tune_from_pilot(args.pilot, CRITERION_FLAGS[args.criterion], args.out)
        print(json.dumps(json.loads((out / "tuning_summary.json").read_text()), indent=1))
    else:
        status = emit_plot_data(args.results_dir, args.out)
        if "message" in status:
            print(status["message"])
            return 1
        for name, where in status.items():
            print(f"{name}: {where}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
