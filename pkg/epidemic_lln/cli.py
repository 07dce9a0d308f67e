#!/usr/bin/env python3
import argparse
import logging
import os
import sys
from typing import Any, Dict, List, Optional

from epidemic_lln import __version__
from epidemic_lln.exceptions import ConfigError, EpidemicError
from epidemic_lln.harness import (
    EXPERIMENTS, apply_overrides, emit_reports, load_config, load_preset, run_experiment,
)
from epidemic_lln.models import ExperimentConfig


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="epidemic-lln",
        description="""
epidemic-lln - Weighted SIR epidemics on Erdos-Renyi graphs and their large-n limit.

Each subcommand runs one study and writes its CSV table(s) plus summary.json
into the output directory.

  simulate   one trajectory on the observation grid
  limit      limit curves psi, H_S(psi), H_V(psi) and the per-class ODE
  converge   replicate means against the limit for every n
  corollary  normalised cross-edge discrepancy per (n, t)
  lemma1     satisfaction of the per-class lower bounds
  sandwich   uniform weights against their grid discretisations
  threshold  final susceptible fraction across lambda / lambda_c
  beta       sampled worst-case cross-edge deviation per n

ENVIRONMENT:
  EPIDEMIC_LLN_OUT      default output directory
  EPIDEMIC_LLN_WORKERS  default number of worker processes

  Both may also be set in a .env file in the current directory.
        """,
        formatter_class=argparse.RawDescriptionHelpFormatter
    )

    parser.add_argument(
        "--version",
        action="version",
        version=f"epidemic-lln {__version__}"
    )
    parser.add_argument(
        "-v", "--verbose",
        action="count",
        default=0,
        help="Enable verbose output. Use -v for progress, -vv for per-replicate detail"
    )

    parser.add_argument(
        "command",
        choices=sorted(EXPERIMENTS),
        help="Study to run"
    )

    # Configuration source
    config_group = parser.add_argument_group('Configuration')
    source = config_group.add_mutually_exclusive_group()
    source.add_argument(
        "--config",
        help="Config file: 'key = value' lines, or YAML when the name ends in .yaml/.yml"
    )
    source.add_argument(
        "--preset",
        help="Packaged configuration to run (default: reference)"
    )

    # Overrides
    override_group = parser.add_argument_group('Overrides')
    override_group.add_argument(
        "--seed",
        type=int,
        help="Master seed (unsigned 64-bit)"
    )
    override_group.add_argument(
        "--replicates",
        type=int,
        help="Replicates per n"
    )
    override_group.add_argument(
        "--tol",
        type=float,
        help="Absolute and relative tolerance of the limit solvers"
    )
    override_group.add_argument(
        "--workers",
        type=int,
        help="Worker processes for replicates"
    )
    override_group.add_argument(
        "--fixed-graph",
        action="store_true",
        default=None,
        help="Share one graph across replicates instead of drawing one per replicate"
    )

    output_group = parser.add_argument_group('Output Configuration')
    output_group.add_argument(
        "-o", "--out",
        help="Output directory (default: $EPIDEMIC_LLN_OUT, the config's out_dir, or ./results)"
    )

    return parser.parse_args(argv)


def environment_defaults() -> Dict[str, Any]:
    """Config defaults taken from EPIDEMIC_LLN_* variables."""
    defaults: Dict[str, Any] = {}
    if os.environ.get("EPIDEMIC_LLN_OUT"):
        defaults["out_dir"] = os.environ["EPIDEMIC_LLN_OUT"]
    if os.environ.get("EPIDEMIC_LLN_WORKERS"):
        try:
            defaults["workers"] = int(os.environ["EPIDEMIC_LLN_WORKERS"])
        except ValueError as e:
            raise ConfigError(f"EPIDEMIC_LLN_WORKERS must be an integer, got "
                              f"'{os.environ['EPIDEMIC_LLN_WORKERS']}'") from e
    return defaults


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    """Environment defaults, then the config file or preset, then command-line flags."""
    logger = logging.getLogger(__name__)
    defaults = environment_defaults()
    if args.config:
        cfg = load_config(args.config, defaults)
    else:
        name = args.preset or "reference"
        logger.info(f"Using preset '{name}'")
        cfg = load_preset(name, defaults)
    return apply_overrides(cfg, master_seed=args.seed, replicates=args.replicates, tol=args.tol,
                           workers=args.workers, fixed_graph=args.fixed_graph, out_dir=args.out)


def main(argv: Optional[List[str]] = None):
    # Load environment variables from .env file if it exists
    try:
        from dotenv import load_dotenv
        load_dotenv()
    except ImportError:
        pass

    args = parse_args(argv)

    log_level = logging.ERROR
    if args.verbose >= 2:
        log_level = logging.DEBUG
    elif args.verbose >= 1:
        log_level = logging.INFO
    logging.basicConfig(level=log_level, format='%(levelname)s: %(message)s', stream=sys.stderr)
    logger = logging.getLogger(__name__)

    try:
        cfg = build_config(args)
        logger.info(f"Running '{args.command}' with master seed {cfg.master_seed}")
        report = run_experiment(args.command, cfg)
        paths = emit_reports(report, cfg.out_dir)
    except EpidemicError as e:
        logger.error(f"{args.command} failed: {e}")
        sys.exit(1)

    for path in paths:
        print(path)


if __name__ == "__main__":
    try:
        main()
    except Exception as e:
        logging.getLogger(__name__).critical(f"An unexpected error occurred: {e}")
        sys.exit(1)
