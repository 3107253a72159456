"""
Command-line driver: `witten-lab <command> --config <path> --out <dir>`.

Exit codes: 0 success, 1 numerical failure, 2 configuration error.
"""
import argparse
import logging
import sys
from typing import Callable, Dict, List, Optional

from witten_lab.config import load_config
from witten_lab.core.orchestrator import ExperimentRunner
from witten_lab.errors import ConfigError, NumericalError

logger = logging.getLogger("witten_lab")

EXIT_OK = 0
EXIT_NUMERIC = 1
EXIT_CONFIG = 2

COMMANDS: Dict[str, Callable[[ExperimentRunner], dict]] = {
    "spectra": ExperimentRunner.run_spectra,
    "branches": ExperimentRunner.run_branches,
    "morse": ExperimentRunner.run_morse,
    "torsion-check": ExperimentRunner.run_torsion,
    "oscillator-tables": ExperimentRunner.run_oscillator_tables,
}

HELP = {
    "spectra": "spectral packages, Betti numbers and lattice volumes of the undeformed complex",
    "branches": "tracked eigenvalue branches of the deformed Laplacians, gaps and cluster labels",
    "morse": "critical points, connecting trajectories and the Morse complex",
    "torsion-check": "torsion identity corpus, a^q(t) traces, isometry table and torsion right-hand side",
    "oscillator-tables": "harmonic-oscillator symbol tables and their brute-force cross-check",
}


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed {text} outside the unsigned 64-bit range")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="witten-lab", description="Witten deformation numerical laboratory.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name, help=HELP[name])
        cmd.add_argument("--config", required=True, help="JSON experiment configuration")
        cmd.add_argument("--out", default=None, help="artifact directory (default: config output or name)")
        cmd.add_argument("--seed", type=_seed, default=None, help="override solver.seed")
        cmd.add_argument("--threads", type=int, default=None, help="worker threads for branch tracking")
        cmd.add_argument("-v", "--verbose", action="count", default=0, help="INFO, or DEBUG when repeated")
    return parser


def configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else (logging.INFO if verbosity == 1 else logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config = config.with_seed(args.seed)
        if args.threads is not None:
            config = config.with_threads(args.threads)
        runner = ExperimentRunner(config, args.out)
        COMMANDS[args.command](runner)
        path = runner.finish(args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    logger.info("%s finished; summary in %s", args.command, path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
