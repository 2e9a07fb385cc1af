"""
Pipeline service: validates run configurations, runs registered pipelines and writes every
run into its own directory.
"""
import json
import logging
import time
import warnings
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

from pydantic import ValidationError

import settings
from exceptions import ConfigurationError, LabError
from models.schemas import (
    DeviceConfig,
    GaugeProfile,
    GridSpec,
    ModelParams,
    PipelineSpec,
    ProtocolOptions,
    ValidationReport,
)
from services.device.protocol import BASIS_TOL
from services.parallel import resolve_workers
from services.pipeline.base import PipelineRegistry, PipelineResult
from services.pipeline.pipelines import PIPELINES
from services.pipeline.writers import CsvWriter, PlotWriter, write_manifest
from services.response import R2_THRESHOLD
from services.topology.chern import DRIFT_TOL
from services.topology.winding import INTEGER_TOL

logger = logging.getLogger(__name__)

LIBRARIES = ("numpy", "scipy", "pydantic", "matplotlib", "python-dotenv")

# Which module owns each configuration section, for error messages
SECTION_MODULES = {
    "model": "gamma-model",
    "gauge": "pme-response",
    "device": "device-emulator",
    "protocol": "device-emulator",
    "grid": "topo-invariants",
}

SECTIONS: Dict[str, type] = {
    "model": ModelParams,
    "gauge": GaugeProfile,
    "device": DeviceConfig,
    "grid": GridSpec,
    "protocol": ProtocolOptions,
}


@dataclass
class RunReport:
    exit_code: int
    run_dir: Path
    status: str
    files: List[str] = field(default_factory=list)
    manifest: Dict[str, Any] = field(default_factory=dict)
    error: Optional[str] = None


def library_versions() -> Dict[str, str]:
    versions = {}
    for name in LIBRARIES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def set_dotted(target: Dict[str, Any], key: str, value: Any):
    """Set a nested value from a dotted key such as 'model.lambda'"""
    parts = key.split(".")
    node = target
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigurationError(f"cannot override {key}", [f"xplab-cli.{key}: {part} is not a section"])
    node[parts[-1]] = value


def _field_keys(model: type) -> Dict[str, List[str]]:
    return {name: [name] + ([info.alias] if info.alias else []) for name, info in model.model_fields.items()}


def defaults_applied(raw: Mapping[str, Any]) -> List[str]:
    """Dotted names of every field the configuration left to its default"""
    applied = []
    for name, keys in _field_keys(PipelineSpec).items():
        if name in SECTIONS or name == "parameters":
            continue
        if not any(k in raw for k in keys):
            applied.append(name)
    for section, model in SECTIONS.items():
        given = raw.get(section) or {}
        for name, keys in _field_keys(model).items():
            if not any(k in given for k in keys):
                applied.append(f"{section}.{keys[-1]}")
    return applied


def format_errors(exc: ValidationError) -> List[str]:
    """'module.field: message' for every schema violation"""
    problems = []
    for err in exc.errors():
        loc = [str(part) for part in err["loc"]]
        if not loc:
            problems.append(f"xplab-cli: {err['msg']}")
            continue
        module = SECTION_MODULES.get(loc[0], "xplab-cli")
        where = ".".join(loc[1:] if loc[0] in SECTION_MODULES else loc) or loc[0]
        problems.append(f"{module}.{where}: {err['msg']}")
    return problems


def load_config(path) -> Dict[str, Any]:
    """Read a JSON run configuration"""
    try:
        with open(path, encoding="utf-8") as handle:
            raw = json.load(handle)
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}", [f"xplab-cli.config: {exc}"])
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path} is not valid JSON", [f"xplab-cli.config: line {exc.lineno}: {exc.msg}"])
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path} must hold a JSON object", ["xplab-cli.config: top level is not an object"])
    return raw


def validate_config(path=None, overrides: Optional[Mapping[str, Any]] = None,
                    base: Optional[Mapping[str, Any]] = None) -> ValidationReport:
    """
    Build a PipelineSpec from a file, a base mapping and dotted overrides.

    Precedence is overrides > file > base > defaults. Every violation is reported, none is
    silently replaced by a default.
    """
    raw: Dict[str, Any] = json.loads(json.dumps(base or {}))
    try:
        if path is not None:
            for key, value in load_config(path).items():
                if isinstance(value, dict) and isinstance(raw.get(key), dict):
                    raw[key].update(value)
                else:
                    raw[key] = value
        for key, value in (overrides or {}).items():
            set_dotted(raw, key, value)
    except ConfigurationError as exc:
        return ValidationReport(ok=False, errors=exc.problems)
    applied = defaults_applied(raw)
    raw.setdefault("output_dir", settings.OUTPUT_DIR)
    raw.setdefault("workers", settings.WORKERS)

    try:
        spec = PipelineSpec.model_validate(raw)
    except ValidationError as exc:
        problems = format_errors(exc)
        for problem in problems:
            logger.debug(f"Configuration problem: {problem}")
        return ValidationReport(ok=False, errors=problems)

    try:
        pipeline = {p.name: p for p in PIPELINES}[spec.name]()
        pipeline.parameters(spec)
        applied += pipeline.defaults_applied(spec)
    except ConfigurationError as exc:
        return ValidationReport(ok=False, errors=exc.problems)
    return ValidationReport(ok=True, spec=spec, defaults_applied=applied)


def _tolerances(spec: PipelineSpec) -> Dict[str, float]:
    return {
        "grid_drift": DRIFT_TOL,
        "winding_integer": INTEGER_TOL,
        "linear_fit_r2": R2_THRESHOLD,
        "block_basis": BASIS_TOL,
        "leakage": spec.protocol.leakage_threshold,
        "tol_gap": spec.grid.tol_gap,
    }


class PipelineService:
    def __init__(self):
        self._register_defaults()
        self.csv_writer = CsvWriter()
        self.plot_writer = PlotWriter()

    def _register_defaults(self):
        """Register the built-in pipelines"""
        for pipeline in PIPELINES:
            PipelineRegistry.register(pipeline.name, pipeline)
        logger.debug(f"Registered pipelines: {PipelineRegistry.names()}")

    def run(self, spec: PipelineSpec, applied: Optional[List[str]] = None) -> RunReport:
        """
        Run one pipeline and write its artefacts.

        A successful run writes data/*.csv, plots/*.png and manifest.json below
        <output_dir>/<run label>. When a stage fails, the tables finished so far go to a
        quarantine/ subdirectory and the exit code comes from the error.
        """
        pipeline = PipelineRegistry.get_pipeline(spec.name)
        run_dir = Path(spec.output_dir) / spec.run_label()
        result = PipelineResult(pipeline=spec.name)
        workers = resolve_workers(spec.workers)
        status, exit_code, error = "ok", 0, None

        logger.info(f"Running {spec.name} into {run_dir} with {workers} worker(s)")
        start = time.perf_counter()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                pipeline.run(spec, result, workers)
            except LabError as exc:
                logger.error(f"Pipeline {spec.name} failed in stage {exc.context.get('stage')}: {exc}",
                             exc_info=True)
                status, exit_code, error = "error", exc.exit_code, str(exc)
            except Exception as exc:
                stage = result.stages[-1] if result.stages else None
                logger.error(f"Pipeline {spec.name} raised {type(exc).__name__} in stage {stage}: {exc}",
                             exc_info=True)
                status, exit_code, error = "error", 1, f"{type(exc).__name__}: {exc}"
        elapsed = time.perf_counter() - start
        for w in caught:
            message = str(w.message)
            if message not in result.warnings:
                result.warnings.append(message)

        if status == "ok" and result.summary.get("passed") is False:
            status, exit_code = "failed", 1

        self.csv_writer.checksums.clear()
        target = run_dir if status != "error" else run_dir / "quarantine"
        files = self.csv_writer.write(result, target)
        if status != "error" and spec.plots:
            files += self.plot_writer.write(result, run_dir)
        if target != run_dir:
            files = [f"quarantine/{f}" for f in files]

        manifest = {
            "pipeline": spec.name,
            "status": status,
            "exit_code": exit_code,
            "error": error,
            "spec": spec.model_dump(mode="json", by_alias=True),
            "defaults_applied": sorted(set((applied or []) + pipeline.defaults_applied(spec))),
            "tolerances": _tolerances(spec),
            "libraries": library_versions(),
            "wall_time_s": elapsed,
            "stages": result.stages,
            "summary": result.summary,
            "warnings": result.warnings,
            "checksums": {
                (f"quarantine/{k}" if target != run_dir else k): v for k, v in self.csv_writer.checksums.items()
            },
            "files": files,
        }
        write_manifest(manifest, run_dir / "manifest.json")
        logger.info(f"{spec.name} finished with status {status} in {elapsed:.1f} s")
        return RunReport(exit_code=exit_code, run_dir=run_dir, status=status, files=files + ["manifest.json"],
                         manifest=manifest, error=error)
