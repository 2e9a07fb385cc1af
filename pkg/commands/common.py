"""
Arguments and helpers shared by the pipeline subcommands.
"""
import argparse
import json
import logging
import sys
from typing import Any, Dict, Optional

from services.pipeline.service import PipelineService, validate_config

logger = logging.getLogger(__name__)


def parse_value(text: str) -> Any:
    """JSON literal when it parses, plain string otherwise"""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def key_value(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), parse_value(value)


def add_common_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--output-dir", help="Directory receiving the run directory")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--workers", type=int, help="Process pool size for sweeps")
    parser.add_argument("--no-plots", action="store_true", help="Skip rendering plots")
    parser.add_argument("--set", dest="overrides", action="append", type=key_value, default=[],
                        metavar="KEY=VALUE", help="Override a dotted configuration field, e.g. model.lambda=0.5")


def collect_overrides(args, extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Flags in increasing precedence: typed flags, then --set"""
    overrides: Dict[str, Any] = {}
    for key, value in (extra or {}).items():
        if value is not None:
            overrides[key] = value
    if args.output_dir is not None:
        overrides["output_dir"] = args.output_dir
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.no_plots:
        overrides["plots"] = False
    overrides.update(dict(args.overrides))
    return overrides


def print_errors(errors) -> None:
    for error in errors:
        print(f"error: {error}", file=sys.stderr)


def run_pipeline(args, base: Dict[str, Any], extra: Optional[Dict[str, Any]] = None) -> int:
    """Validate flags > file > base and run the resulting spec"""
    report = validate_config(args.config, collect_overrides(args, extra), base)
    if not report.ok:
        print_errors(report.errors)
        return 2
    result = PipelineService().run(report.spec, report.defaults_applied)
    print(f"{result.status}: {result.run_dir}")
    if result.error:
        print(f"error: {result.error}", file=sys.stderr)
    return result.exit_code
