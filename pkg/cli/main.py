"""Command-line entry point.

Usage:
    metastab simulate --seed 7 --out runs/sim --model.n=1000 --simulate.horizon=10
    metastab --config experiments/exit.toml exit-times --threads 4 --canonical
    metastab ldp --model.h=10 --ldp.ns=[40,80,160] --ldp.replicas=200

Any key of the run config can be set with a dotted ``--section.key=value``
flag; values are read as TOML literals. Exit codes: 0 success, 1 failure,
2 guard or argument violation, 3 truncated or partial results.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from cli.commands import run_experiment
from cli.run_config import load_run_config
from config.logging_config import setup_logging
from services.errors import EXIT_OK, EXIT_PARTIAL, MetastabError

logger = logging.getLogger(__name__)

DESCRIPTIONS = {
    "simulate": "one trajectory of the finite system (events.csv, trajectory.csv)",
    "extinction": "last-spike times by integrated-rate inversion (extinction.csv)",
    "exit-times": "exit-time ensemble, exponentiality diagnostics and framework constants (exit_times.csv)",
    "meanfield": "invariant density, limit ODE and optional Picard path (density.csv, limit_ode.csv)",
    "phase": "regime flags on an (a, b) grid and the contraction boundary (phase.csv, boundary.csv)",
    "ldp": "quasi-potential bounds, path actions and extinction-time scaling (scaling.csv)",
    "couple": "U-Z, propagation-of-chaos or synchronous coupling diagnostics (coupling.csv)",
}


def _common_options() -> argparse.ArgumentParser:
    # SUPPRESS keeps a subcommand from overwriting options given before it
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="TOML run config")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="64-bit root seed")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker processes")
    common.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="output directory")
    common.add_argument(
        "--canonical",
        action="store_true",
        default=argparse.SUPPRESS,
        help="sort CSV rows so serial and parallel runs write identical files",
    )
    common.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        default=argparse.SUPPRESS,
        help="console and file log level",
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(
        prog="metastab",
        description="Experiments on the metastability of a mean-field leaky neuron network",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__.split("Usage:", 1)[1],
        parents=[common],
        allow_abbrev=False,
    )
    subparsers = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for name, description in DESCRIPTIONS.items():
        subparsers.add_parser(name, help=description, description=description, parents=[common], allow_abbrev=False)
    return parser


def _is_override(item: str) -> bool:
    key = item.split("=", 1)[0]
    return item.startswith("--") and "=" in item and "." in key


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    unknown = [item for item in extra if not _is_override(item)]
    if unknown:
        parser.error(f"unrecognized arguments: {' '.join(unknown)}")
    setup_logging(getattr(args, "log_level", None))

    try:
        config = load_run_config(
            getattr(args, "config", None),
            extra,
            experiment=args.experiment,
            seed=getattr(args, "seed", None),
            threads=getattr(args, "threads", None),
            out=getattr(args, "out", None),
            canonical=getattr(args, "canonical", None),
        )
        result = run_experiment(config)
    except MetastabError as exc:
        logger.error(f"{args.experiment} failed: {exc}")
        print(f"{args.experiment}: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130

    print(f"{config.experiment}: wrote {len(result.files)} files to {config.out}")
    if result.partial:
        logger.warning(f"{config.experiment}: results are truncated or partial")
        return EXIT_PARTIAL
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())

