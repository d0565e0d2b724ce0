#!/usr/bin/env python3
# pylint: disable=invalid-name,too-many-locals,too-many-statements
"""
Resource Allocation Toolkit - Main Module

This module provides the command-line entry point. It loads the experiment
config, applies command-line overrides, runs the selected command and maps
domain errors to exit codes (2 validation, 3 numerical, 4 graph assumptions).

Example:
    python main.py --config configs/three_agent_cycle.json equilibrium --eps 0.1
"""

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

from adapters.config_loader import EQUILIBRIUM_METHODS, apply_overrides, config_to_dict, parse_config, read_config
from adapters.report_writer import ReportWriter, jsonable
from core.domain.exceptions import DomainException, GraphAssumptionError
from core.experiment import ExperimentRunner


def str2bool(v):
    """Convert string to boolean value.

    Args:
        v: String value to convert

    Returns:
        bool: True for 'true', '1', 'yes', 'y', 't', 'on'
              False for 'false', '0', 'no', 'n', 'f', 'off'
    """
    if isinstance(v, bool):
        return v
    if v is None:
        raise argparse.ArgumentTypeError(
            "Boolean value expected. Accepted values: true/false, yes/no, 1/0, on/off"
        )
    if v.lower() in ('yes', 'true', 't', 'y', '1', 'on'):
        return True
    if v.lower() in ('no', 'false', 'f', 'n', '0', 'off'):
        return False
    raise argparse.ArgumentTypeError(
        'Boolean value expected. Accepted values: true/false, yes/no, 1/0, on/off'
    )


def positive_float(v):
    """Parse a strictly positive float."""
    try:
        value = float(v)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"number expected, got {v!r}") from exc
    if not value > 0:
        raise argparse.ArgumentTypeError(f"value must be positive, got {v}")
    return value


def positive_int(v):
    """Parse a strictly positive integer."""
    try:
        value = int(v)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"integer expected, got {v!r}") from exc
    if value < 1:
        raise argparse.ArgumentTypeError(f"value must be at least 1, got {v}")
    return value


def float_list(v):
    """Parse a comma-separated list of positive floats, e.g. '0.2,0.1,0.05'."""
    items = [item for item in v.split(',') if item.strip()]
    if not items:
        raise argparse.ArgumentTypeError("at least one value expected")
    return tuple(positive_float(item) for item in items)


def seed_value(v):
    """Parse an unsigned 64-bit seed."""
    try:
        value = int(v)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"integer seed expected, got {v!r}") from exc
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return value


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with one subcommand per experiment command."""
    parser = argparse.ArgumentParser(
        description="Distributed sub-optimal resource allocation toolkit",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Check that the communication graph is strongly connected and weight-balanced
  python main.py --config configs/three_agent_cycle.json check-graph

  # Solve the optimal allocation
  python main.py --config configs/three_agent_cycle.json solve

  # Equilibrium of the eps-dynamics by fixed-point iteration
  python main.py --config configs/three_agent_cycle.json equilibrium --eps 0.1 --method phi

  # Simulate and write the trajectory CSV to a custom directory
  python main.py --config configs/three_agent_cycle.json --out runs/eps01 --force simulate --eps 0.1

  # Sweep the sub-optimality gap over eps with a progress bar
  python main.py --config configs/three_agent_cycle.json --progress-bar true sweep --eps-grid 0.2,0.1,0.05,0.02,0.01

  # Compare the full and reduced models at two eps values
  python main.py --config configs/three_agent_cycle.json compare --eps 0.1 0.05

Exit codes:
  0 success, 2 invalid config or parameters, 3 numerical failure,
  4 graph not strongly connected or not weight-balanced.

Environment (.env is read on start):
  RESALLOC_OUTPUT_DIR  default output directory (default: output)
  RESALLOC_WORKERS     default sweep worker count (default: available parallelism)
"""
    )
    common_group = parser.add_argument_group('Common Arguments')
    common_group.add_argument('--config', required=True, help='Path to the JSON experiment config')
    common_group.add_argument(
        '--out',
        default=os.getenv('RESALLOC_OUTPUT_DIR', 'output'),
        help='Output directory for reports, CSVs and the manifest'
    )
    common_group.add_argument('--seed', type=seed_value, default=None, help='Seed for random initial states')
    common_group.add_argument('--quiet', action='store_true', help='Do not print results to the console')
    common_group.add_argument('--force', action='store_true', help='Force overwrite existing files')
    common_group.add_argument('--debug', action='store_true', help='Enable debug logging')
    common_group.add_argument(
        '--progress-bar',
        type=str2bool,
        default=False,
        help='Show progress bar during sweeps and comparisons (true/false, yes/no, 1/0)'
    )

    commands = parser.add_subparsers(dest='command', required=True, metavar='COMMAND')
    commands.add_parser('check-graph', help='Check strong connectivity and weight balance')
    commands.add_parser('solve', help='Solve the optimal allocation (KKT conditions)')

    equilibrium = commands.add_parser('equilibrium', help='Solve the eps-equilibrium of the dynamics')
    equilibrium.add_argument('--eps', type=positive_float, default=None, help='Time-scale parameter')
    equilibrium.add_argument('--method', choices=sorted(EQUILIBRIUM_METHODS), default=None, help='Equilibrium solver')

    simulate = commands.add_parser('simulate', help='Integrate the configured dynamics')
    simulate.add_argument('--eps', type=positive_float, default=None, help='Time-scale parameter')

    sweep = commands.add_parser('sweep', help='Sweep the sub-optimality gap over eps')
    sweep.add_argument('--eps-grid', type=float_list, default=None, help='Comma-separated decreasing eps values')
    sweep.add_argument('--method', choices=sorted(EQUILIBRIUM_METHODS), default=None, help='Equilibrium solver')
    sweep.add_argument(
        '--workers',
        type=positive_int,
        default=os.getenv('RESALLOC_WORKERS'),
        help='Worker threads for the sweep'
    )

    compare = commands.add_parser('compare', help='Compare the full dynamics with the reduced model')
    compare.add_argument('--eps', type=positive_float, nargs='+', default=None, help='One or more eps values')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main entry point for the resource allocation toolkit.

    This function:
    1. Reads .env defaults and parses command line arguments
    2. Sets up logging
    3. Loads the config and applies command line overrides
    4. Runs the command and prints its summary
    5. Maps domain errors to exit codes

    Returns:
        int: Process exit code
    """
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)

    # Configure logging based on debug flag
    logger = logging.getLogger(__name__)
    if args.debug:
        logging.basicConfig(level=logging.DEBUG)
    else:
        logging.basicConfig(level=logging.ERROR)

    # Create console handler with formatting
    console_handler = logging.StreamHandler()
    formatter = logging.Formatter(
        "%(asctime)s [%(levelname)s] %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S"
    )
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    logger.debug("Arguments: %s", args)

    overrides = {
        'eps': getattr(args, 'eps', None) if args.command in ('equilibrium', 'simulate') else None,
        'eps_grid': getattr(args, 'eps_grid', None),
        'equilibrium_method': getattr(args, 'method', None),
    }
    kwargs = {}
    if args.command == 'compare' and args.eps:
        kwargs['eps_values'] = args.eps

    try:
        config = parse_config(apply_overrides(read_config(args.config), overrides))
        runner = ExperimentRunner(
            config,
            ReportWriter(args.out, force=args.force),
            config_echo=config_to_dict(config),
            seed=args.seed,
            workers=getattr(args, 'workers', None),
            progress_bar=args.progress_bar,
            quiet=args.quiet,
        )
        summary = runner.run(args.command, **kwargs)
    except DomainException as exc:
        logger.error("%s", exc)
        return exc.exit_code

    if not args.quiet:
        print(json.dumps(jsonable(summary), indent=2, sort_keys=True))

    if args.command == 'check-graph' and not summary['assumptions_hold']:
        logger.error("Graph is not strongly connected and weight-balanced")
        return GraphAssumptionError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
