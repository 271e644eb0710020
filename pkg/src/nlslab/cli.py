"""Command-line entry point: ``nlslab <subcommand> [--config ...] [--override key=value ...]``."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

from .experiments import SCENARIOS, load_config, run_experiment
from .spectral import ConfigurationError, NumericalError

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlslab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SCENARIOS:
        p = sub.add_parser(name.replace("_", "-"), help=f"run the {name} scenario")
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--seed", type=int, help="random seed (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted config key, e.g. solver.dt=1e-4 (repeatable)")
        p.add_argument("--print-config", action="store_true",
                       help="print the resolved config and exit")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    scenario = args.command.replace("-", "_")
    try:
        cfg = load_config(args.config)
        overrides = [f"scenario={scenario}"] + list(args.override)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigurationError("seed must be non-negative")
            overrides.append(f"seed={args.seed}")
        if args.out is not None:
            overrides.append(f"out={args.out!r}")
        cfg = cfg.with_overrides(overrides)
        if args.print_config:
            cfg.validate()
            sys.stdout.write(cfg.to_yaml())
            return EXIT_PASS
        outcome = run_experiment(cfg)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    sys.stdout.write(outcome.report())
    return EXIT_PASS if outcome.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
