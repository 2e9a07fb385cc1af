import argparse
import logging
import sys

import settings
from commands import COMMANDS
from exceptions import LabError

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tmlab",
        description="""
        Tensor-monopole lab: band structure, second Chern numbers, the parity magnetic
        effect and an emulated four-qubit device.

        Exit codes: 0 success, 1 criterion failure, 2 configuration error,
        3 numerical-convergence error.
        """,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--log-level", default=None, help=f"Logging level (default {settings.LOG_LEVEL})")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    settings.configure_logging(args.log_level)
    try:
        return args.handler(args)
    except LabError as exc:
        logger.error(f"{args.command} failed: {exc}", exc_info=True)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
