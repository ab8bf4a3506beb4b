"""``dbnapprox <subcommand> --config PATH [--out DIR] [--threads N] [--seed S]``.

Exit status: 0 on success, 1 on a runtime error, 2 on a bad command line
or config, 3 when the run completed but some trials failed.  Nothing is
written unless the config parses and the experiment finishes.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from ..errors import ConfigError, DbnApproxError
from .config import EXPERIMENTS, load_config
from .experiments import run_experiment
from .output import write_all

SUBCOMMANDS = tuple(e.replace("_", "-") for e in EXPERIMENTS)
EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_PARTIAL = 0, 1, 2, 3


def _threads(value) -> int:
    n = int(value)
    if n < 1:
        raise ValueError
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dbnapprox", description="DBN density-approximation experiments")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="experiment config file")
    p.add_argument("--out", default=".", help="output directory (default: current directory)")
    p.add_argument("--threads", type=_threads, default=None,
                   help="worker threads (default: $DBNAPPROX_THREADS or 1)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def resolve_threads(arg) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("DBNAPPROX_THREADS")
    if env:
        try:
            return _threads(env)
        except ValueError:
            raise ConfigError(f"DBNAPPROX_THREADS must be a positive integer, got {env!r}") from None
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        threads = resolve_threads(args.threads)
        cfg = load_config(args.config, experiment=args.subcommand, seed=args.seed)
        outcome = run_experiment(cfg, threads)
    except ConfigError as exc:
        print(f"dbnapprox: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DbnApproxError as exc:
        print(f"dbnapprox: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    written = write_all(args.out, outcome.files)
    for path in written:
        print(path)
    if outcome.failures:
        print(f"dbnapprox: {outcome.failures} of {outcome.rows} rows failed", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
