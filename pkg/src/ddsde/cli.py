"""Command-line entry point: ``python -m ddsde <subcommand> ...``.

Exit codes: 0 success, 2 configuration or I/O error, 3 numerical failure.
Each run writes one CSV per table and ``summary.json`` into ``--out``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigurationError, ContractError, DomainError, FactorizationError, NumericalBlowUp, ResourceError
from .experiments import load_config, parse_config, run, run_particles
from .io import dumps

CONFIG_COMMANDS = ("avgfield", "picard", "particles", "stability", "chaos", "law_regularity", "mollification")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddsde", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    fbm = sub.add_parser("fbm-test", help="Monte Carlo validation of the fBm samplers")
    fbm.add_argument("--H", type=float, action="append", help="Hurst index (repeatable)")
    fbm.add_argument("--n", type=int, default=1024, help="time steps")
    fbm.add_argument("--paths", type=int, default=10000)
    fbm.add_argument("--method", choices=("cholesky", "circulant"), default="cholesky")
    fbm.add_argument("--cross-check", action="store_true", help="add Cholesky vs circulant covariance rows")
    fbm.add_argument("--seed", type=int, default=0)
    fbm.add_argument("--out", type=Path, default=Path("out/fbm-test"))

    for name in CONFIG_COMMANDS:
        p = sub.add_parser(name, help=f"run a {name} experiment from a config document")
        p.add_argument("--config", type=Path, required=True)
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", type=Path, default=None)
        if name == "particles":
            p.add_argument("--export", action="store_true", help="also write the full ensemble CSV (large)")
    return parser


def _dispatch(args) -> int:
    if args.command == "fbm-test":
        doc = {"experiment": "fbm-test", "seed": args.seed,
               "options": {"H": args.H or [0.5], "n_steps": args.n, "paths": args.paths,
                           "method": args.method, "cross_check": args.cross_check}}
        cfg = parse_config(doc)
        out = args.out
    else:
        cfg = load_config(args.config, args.seed)
        if cfg.experiment != args.command:
            raise ConfigurationError(f"{args.config}: experiment is {cfg.experiment!r}, "
                                     f"but the subcommand is {args.command!r}")
        out = args.out or Path(cfg.output or f"out/{cfg.experiment}")
    if args.command == "particles":
        report = run_particles(cfg, out / "ensemble.csv" if args.export else None)
    else:
        report = run(cfg)
    path = report.write(out)
    sys.stdout.write(dumps({"summary": str(path), "checks": report.checks}))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except (ConfigurationError, ContractError, DomainError, ResourceError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return 2
    except (NumericalBlowUp, FactorizationError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def run_cli(argv) -> int:
    """Programmatic form of the command line; returns the exit code."""
    try:
        return main(argv)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0) if exc.code != 0 else 0
