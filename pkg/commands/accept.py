import json
import logging
from pathlib import Path

from services.pipeline.acceptance import LEVELS, acceptance_suite

logger = logging.getLogger(__name__)


def accept(args) -> int:
    report = acceptance_suite(args.level, args.workers, args.only)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        Path(args.report).write_text(text + "\n", encoding="utf-8")
        logger.info(f"Acceptance report written to {args.report}")
    else:
        print(text)
    return 0 if report["passed"] else 1


def register(subparsers):
    p = subparsers.add_parser("accept", help="Run the acceptance criteria")
    p.add_argument("--level", choices=LEVELS, default="quick")
    p.add_argument("--only", type=int, nargs="+", help="Criterion numbers to run")
    p.add_argument("--workers", type=int)
    p.add_argument("--report", help="Write the JSON report here instead of stdout")
    p.set_defaults(handler=accept)
