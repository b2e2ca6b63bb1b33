"""Command line entry point: ``fegkit --problem bilinear --method feg --iters 6 --verify``.

Exit codes: 0 success, 1 usage or configuration error, 2 certificate failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import solvers
from .bench import ExperimentConfig, run_experiment
from .core import FegError

EXIT_OK, EXIT_USAGE, EXIT_CERT = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fegkit", description="Run extragradient-family solvers and certificates.")
    p.add_argument("--config", help="JSON experiment config; inline problem/method flags are ignored")
    p.add_argument("--problem", default="bilinear",
                   help="bilinear, worst-case, scaled-identity, random-nc or quadratic:<file>")
    p.add_argument("--method", action="append", choices=solvers.METHODS,
                   help="method selector, repeatable (default: feg)")
    p.add_argument("--L", type=float, help="problem scale L")
    p.add_argument("--R", type=float, help="worst-case problem parameter R")
    p.add_argument("--mu", type=float, help="scaled-identity parameter")
    p.add_argument("--d", type=int, help="dimension for generated problems")
    p.add_argument("--rho", type=float, help="comonotonicity used by FEG (and target for random-nc)")
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--delta", type=float, help="FEG-A backtracking factor")
    p.add_argument("--tau-init", type=float, help="FEG-A initial tau")
    p.add_argument("--eta-init", type=float, help="FEG-A initial eta")
    p.add_argument("--eps", type=float, help="S-FEG target accuracy (variance schedule)")
    p.add_argument("--sigma2", type=float, help="S-FEG constant noise variance")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--verify", action="store_true", help="run the certificate suite")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        cfg.output_dir = args.out
        cfg.verify = cfg.verify or args.verify
        return cfg.validate()
    pp = {}
    for key in ("L", "R", "mu", "d"):
        val = getattr(args, key)
        if val is not None:
            pp[key] = val
    if args.problem == "random-nc":
        pp["seed"] = args.seed
        if args.rho is not None:
            pp["rho"] = args.rho
    methods = []
    for name in args.method or ["feg"]:
        m = {"name": name}
        if name == "feg" and args.rho is not None:
            m["rho"] = args.rho
        if name == "feg-a":
            for key in ("delta", "tau_init", "eta_init"):
                val = getattr(args, key)
                if val is not None:
                    m[key] = val
        methods.append(m)
    cfg = ExperimentConfig(
        problem=args.problem, problem_params=pp, methods=methods, iters=args.iters,
        trials=args.trials, seed=args.seed, eps=args.eps, sigma2=args.sigma2,
        output_dir=args.out, verify=args.verify,
    )
    return cfg.validate()


def cli_main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"fegkit: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        doc = run_experiment(cfg)
    except (FegError, ValueError, OSError) as exc:
        print(f"fegkit: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(json.dumps(doc, indent=2))
    for r in doc["results"]:
        if "note" in r:
            print(f"{r['method']}: {r['note']}", file=sys.stderr)
    if doc["exit_code"] == EXIT_CERT:
        failed = [r["method"] for r in doc["results"] if "fail" in r["certificates"].values()]
        print(f"fegkit: certificate failure for {', '.join(failed)}", file=sys.stderr)
    return doc["exit_code"]


def main():
    sys.exit(cli_main())
