"""Command line entry point: ``expectation-pinn <subcommand>``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .experiments import run_config, run_matrix
from .metrics import relative_l2
from .network import derive_architecture, load_checkpoint
from .noise import PROCESSES, process_class
from .oracle import closed_vs_quadrature_sweep
from .sampling import collocation_count


def _arch_info(args) -> int:
    k = process_class(args.process).n_params()
    spec = derive_architecture(args.dim, k)
    print(f"d={args.dim} process={args.process} input_dim={spec.input_dim} "
          f"width={spec.width} depth={spec.depth} n_params={spec.n_params} "
          f"collocation_points={collocation_count(args.dim)}")
    return 0


def _oracle_check(args) -> int:
    writer = csv.writer(sys.stdout)
    writer.writerow(("process", "forcing", "max_abs_deviation"))
    for kind, fmap, dev in closed_vs_quadrature_sweep(args.draws, args.seed):
        writer.writerow((kind, fmap, f"{dev:.3e}"))
    return 0


def _override_list(args) -> list[str]:
    out = list(args.set or [])
    for flag, key in (("epochs", "train.epochs"), ("lr", "train.learning_rate"),
                      ("seed", "train.seed"), ("optimizer", "train.optimizer"),
                      ("m", "experiment.m")):
        value = getattr(args, flag, None)
        if value is not None:
            out.append(f"{key}={value}")
    return out


def _train(args) -> int:
    config = load_config(args.config, _override_list(args))
    report = run_config(config, args.out)
    print(json.dumps(report.deterministic_dict() | {"wall_time": report.wall_time}, indent=2))
    return 0


def _eval(args) -> int:
    config = load_config(args.config, args.set or [])
    params, _ = load_checkpoint(args.checkpoint)
    err = relative_l2(params, config.problem, args.points, np.random.default_rng(args.seed))
    print(f"relative_l2={err:.6g} points={args.points} seed={args.seed}")
    return 0


def _matrix(args) -> int:
    overrides = {}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    result = run_matrix(args.filter, args.jobs, args.out, full_budget=args.full_budget,
                        base_seed=args.base_seed, resume=args.resume,
                        train_overrides=overrides or None)
    for r in result.reports:
        status = f"rel_l2={r.relative_l2:.4f}" if r.error is None else f"FAILED {r.error}"
        print(f"{r.config_id}: {status}")
    print(f"wrote results to {Path(args.out).resolve()}")
    return 1 if result.failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="expectation-pinn",
                                     description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("arch-info", help="derived architecture and collocation count")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--process", choices=sorted(PROCESSES), required=True)
    p.set_defaults(func=_arch_info)

    p = sub.add_parser("oracle-check", help="closed form vs quadrature sweep, CSV on stdout")
    p.add_argument("--draws", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_oracle_check)

    p = sub.add_parser("train", help="train and evaluate one configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="runs")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--optimizer", choices=("adam", "sgd"))
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    p.set_defaults(func=_train)

    p = sub.add_parser("eval", help="relative L2 of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--points", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=12345)
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    p.set_defaults(func=_eval)

    p = sub.add_parser("matrix", help="run a subset of the 144-configuration matrix")
    p.add_argument("--filter", default="", metavar="EXPR",
                   help='e.g. "d=2,4 m=1,10 forcing=linear,square"; empty selects all')
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--full-budget", action="store_true", help="10,000 epochs instead of 2,000")
    p.add_argument("--epochs", type=int, help="explicit epoch count, overrides the budget")
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--resume", action="store_true", help="reuse finished runs in --out")
    p.set_defaults(func=_matrix)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
