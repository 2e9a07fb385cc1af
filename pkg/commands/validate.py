import json
import logging

from commands.common import key_value, print_errors
from services.pipeline.service import validate_config

logger = logging.getLogger(__name__)


def validate(args) -> int:
    report = validate_config(args.config, dict(args.overrides))
    if not report.ok:
        print_errors(report.errors)
        return 2
    payload = {
        "spec": report.spec.model_dump(mode="json", by_alias=True),
        "defaults_applied": report.defaults_applied,
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def register(subparsers):
    p = subparsers.add_parser("validate", help="Validate a configuration and print the normalised spec")
    p.add_argument("config")
    p.add_argument("--set", dest="overrides", action="append", type=key_value, default=[], metavar="KEY=VALUE")
    p.set_defaults(handler=validate)
