"""
Base classes for the pipeline architecture.
"""
import logging
from abc import ABC, abstractmethod
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from exceptions import ConfigurationError, LabError
from models.schemas import PipelineSpec

logger = logging.getLogger(__name__)


@dataclass
class Table:
    """One CSV data product; rows hold plain numbers and strings"""
    name: str
    columns: List[str]
    rows: List[Sequence[Any]] = field(default_factory=list)

    def add(self, *values):
        if len(values) != len(self.columns):
            raise ValueError(f"table {self.name} expects {len(self.columns)} values, got {len(values)}")
        self.rows.append(values)

    def column(self, name: str) -> np.ndarray:
        idx = self.columns.index(name)
        return np.array([row[idx] for row in self.rows])


@dataclass
class Series:
    x: Sequence[float]
    y: Sequence[float]
    label: Optional[str] = None
    style: str = "-"


@dataclass
class Plot:
    """A static figure panel: line series, or an image with its extent"""
    name: str
    title: str
    xlabel: str
    ylabel: str
    series: List[Series] = field(default_factory=list)
    image: Optional[np.ndarray] = None
    extent: Optional[Tuple[float, float, float, float]] = None
    colorbar: Optional[str] = None


@dataclass
class PipelineResult:
    """Everything a pipeline produced, filled in stage by stage"""
    pipeline: str
    tables: List[Table] = field(default_factory=list)
    plots: List[Plot] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
    stages: List[str] = field(default_factory=list)

    def table(self, name: str, columns: List[str]) -> Table:
        t = Table(name=name, columns=list(columns))
        self.tables.append(t)
        return t


class Pipeline(ABC):
    """Abstract base class for figure and check pipelines"""
    name: str = ""
    # Sweep values used when spec.parameters leaves them out
    defaults: Dict[str, Any] = {}

    def parameters(self, spec: PipelineSpec) -> Dict[str, Any]:
        unknown = sorted(set(spec.parameters) - set(self.defaults))
        if unknown:
            raise ConfigurationError(
                f"unknown parameters for {self.name}: {unknown}",
                [f"xplab-cli.parameters.{key}: not used by {self.name}" for key in unknown],
            )
        return {**self.defaults, **spec.parameters}

    def defaults_applied(self, spec: PipelineSpec) -> List[str]:
        return [f"parameters.{key}" for key in sorted(self.defaults) if key not in spec.parameters]

    @abstractmethod
    def run(self, spec: PipelineSpec, result: PipelineResult, workers: int) -> None:
        """Compute the data products of spec into result"""
        pass

    @contextmanager
    def stage(self, result: PipelineResult, name: str):
        """Record a stage and tag any lab error raised inside it"""
        result.stages.append(name)
        logger.debug(f"{self.name}: entering stage {name}")
        try:
            yield
        except LabError as exc:
            raise exc.with_stage(f"{self.name}/{name}")


class PipelineRegistry:
    """Registry for pipelines"""
    _pipelines: Dict[str, Any] = {}

    @classmethod
    def register(cls, name: str, pipeline: Any):
        """Register a pipeline class under a name"""
        cls._pipelines[name] = pipeline

    @classmethod
    def get_pipeline(cls, name: str) -> Pipeline:
        """Instantiate the pipeline registered under name"""
        if name not in cls._pipelines:
            raise ConfigurationError(f"No pipeline registered under name: {name}",
                                     [f"xplab-cli.name: unknown pipeline {name!r}"])
        return cls._pipelines[name]()

    @classmethod
    def names(cls) -> List[str]:
        return sorted(cls._pipelines)


class OutputWriter(ABC):
    """Abstract base class for writers of run artefacts"""

    @abstractmethod
    def write(self, result: PipelineResult, directory) -> List[str]:
        """Write the artefacts of result below directory and return their relative paths"""
        pass
