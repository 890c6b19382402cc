"""Command-line front end.

Subcommands: ``gmm``, ``ising``, ``verify``, ``acf``.  Exit codes:
0 success, 1 configuration error, 2 runtime error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import verify as verify_mod
from .config import GmmConfig, IsingConfig, parse_config
from .errors import ConfigError
from .experiments import acf_table, run_gmm_experiment, run_ising_experiment, write_acf

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_VERIFY = 3


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="YAML experiment config")
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument(
        "--deterministic", action="store_true", help="count-based, replayable run"
    )
    parser.add_argument("--steps", type=int, help="chain length override")
    parser.add_argument("--seconds", type=float, help="wall-clock budget override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="occlusion", description="Occlusion-process experiments and oracle checks"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("gmm", "ising"):
        p = sub.add_parser(name, help=f"run the {name} experiment")
        _add_run_flags(p)
    sub.add_parser("verify", help="run the exact oracle suite")
    p_acf = sub.add_parser("acf", help="autocorrelations of a stored trace")
    p_acf.add_argument("trace", type=Path, help="trace CSV with f_x and f_z columns")
    p_acf.add_argument("--max-lag", type=int, default=50)
    p_acf.add_argument("--out", type=Path, default=Path("."))
    return parser


def _load_experiment_config(args, default_cls):
    if args.config is not None:
        cfg = parse_config(args.config)
        if not isinstance(cfg, default_cls):
            raise ConfigError(
                f"config kind {cfg.kind!r} does not match subcommand"
            )
    else:
        cfg = default_cls()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = str(args.out)
    if args.deterministic:
        overrides["deterministic"] = True
    if args.steps is not None:
        overrides["steps"] = args.steps
        overrides["seconds"] = None
    if args.seconds is not None:
        overrides["seconds"] = args.seconds
        overrides["steps"] = None
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    return cfg


def _cmd_experiment(args, default_cls, runner) -> int:
    cfg = _load_experiment_config(args, default_cls)
    out_dir = cfg.out_dir if cfg.out_dir is not None else "."
    rows = runner(cfg, out_dir)
    print(f"wrote {len(rows)} summary rows to {Path(out_dir) / 'summary.csv'}")
    return EXIT_OK


def _cmd_verify() -> int:
    results = verify_mod.run_checks()
    print(verify_mod.render_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def _cmd_acf(args) -> int:
    rows = acf_table(args.trace, args.max_lag)
    args.out.mkdir(parents=True, exist_ok=True)
    out_file = args.out / "acf.csv"
    write_acf(out_file, rows)
    print(f"wrote {out_file}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gmm":
            return _cmd_experiment(args, GmmConfig, run_gmm_experiment)
        if args.command == "ising":
            return _cmd_experiment(args, IsingConfig, run_ising_experiment)
        if args.command == "verify":
            return _cmd_verify()
        if args.command == "acf":
            return _cmd_acf(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
