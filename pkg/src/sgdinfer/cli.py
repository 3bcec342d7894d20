"""Command line entry point: ``sgdinfer run`` and ``sgdinfer dataset``."""

import argparse
import json
import logging
import sys

import numpy as np

from . import seeding
from .harness import ExperimentConfig, run_experiment

log = logging.getLogger("sgdinfer")


def _build_config(args) -> ExperimentConfig:
    doc = {}
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
    if args.model:
        model = doc.get("model", {})
        if model.get("kind", args.model) != args.model:
            model = {}
        doc["model"] = {**model, "kind": args.model}
    overrides = {"MC": args.mc, "N": args.n, "B": args.b, "weights": args.weights}
    for key, val in overrides.items():
        if val is not None:
            doc[key] = val
    if args.cov_mode:
        doc["cov_mode"] = "paper" if args.cov_mode == "paper" else "exact"
    seed = args.seed if args.seed is not None else seeding.seed_from_env(doc.get("seed"))
    if seed is not None:
        doc["seed"] = seed
    return ExperimentConfig.from_dict(doc)


def _cmd_run(args):
    cfg = _build_config(args)
    report, _ = run_experiment(cfg, out_dir=args.out, workers=args.workers, progress=True)
    print(f"{'method':<10} {'coverage':>9} {'width':>10} {'count':>6}")
    for m, row in report.methods.items():
        print(f"{m:<10} {row['coverage']:>9.3f} {row['mean_width']:>10.5f} {row['count']:>6d}")
    if report.no_accept_count:
        print(f"replications with no accepted replica: {report.no_accept_count}/{report.MC}")
    print(f"wrote {args.out}/report.json and {args.out}/intervals.csv")
    return 0


def _cmd_dataset(args):
    from .models import logistic_generate_data, save_dataset, toeplitz_cov

    d = args.d
    theta_s = np.zeros(d)
    theta_s[: min(2, d)] = 1.0
    Sigma_X = np.eye(d) if args.sigma_x == "identity" else toeplitz_cov(d, args.rho)
    seed = args.seed if args.seed is not None else seeding.seed_from_env(0)
    rng = seeding.experiment_stream(seed, seeding.DESIGN)
    meta = {"sigma_x": args.sigma_x, "rho": args.rho, "seed": seed}
    model = logistic_generate_data(d, args.M, theta_s, Sigma_X, rng, args.lam, meta)
    save_dataset(model, args.out)
    print(f"wrote {args.out} (M={model.M}, d={model.d})")
    return 0


def make_parser():
    p = argparse.ArgumentParser(prog="sgdinfer", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a Monte-Carlo coverage experiment")
    r.add_argument("--config", help="JSON file with ExperimentConfig fields")
    r.add_argument("--seed", type=lambda s: int(s, 0),
                   help=f"master seed (else ${seeding.SEED_ENV_VAR}, else the config value)")
    r.add_argument("--out", default="results", help="output directory")
    r.add_argument("--mc", type=int, help="number of replications")
    r.add_argument("--n", type=int, help="SGD iterations per path")
    r.add_argument("--b", type=int, help="bootstrap replicas")
    r.add_argument("--model", choices=["gmm", "logistic", "quadratic"])
    r.add_argument("--weights", choices=["uniform", "exp"])
    r.add_argument("--cov-mode", choices=["exact", "paper"])
    r.add_argument("--workers", type=int, default=1, help="worker processes")
    r.set_defaults(func=_cmd_run)

    ds = sub.add_parser("dataset", help="write a logistic design snapshot")
    ds.add_argument("--out", required=True)
    ds.add_argument("--d", type=int, default=10)
    ds.add_argument("--M", type=int, default=1000)
    ds.add_argument("--lam", type=float, default=0.1)
    ds.add_argument("--sigma-x", choices=["identity", "toeplitz"], default="identity")
    ds.add_argument("--rho", type=float, default=0.5)
    ds.add_argument("--seed", type=lambda s: int(s, 0))
    ds.set_defaults(func=_cmd_dataset)
    return p


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"sgdinfer: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
