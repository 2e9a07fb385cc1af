"""
Writers turning pipeline results into files: versioned CSV tables, static plots and the
JSON manifest.
"""
import csv
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List

import numpy as np

from services.pipeline.base import OutputWriter, Plot, PipelineResult, Table

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "v1"


def format_value(value: Any) -> str:
    """Shortest round-trip text of a value, identical on every run"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (complex, np.complexfloating)):
        return f"{repr(float(value.real))}{'+' if value.imag >= 0 else '-'}{repr(abs(float(value.imag)))}j"
    return str(value)


def write_table(table: Table, path: Path) -> str:
    """Write one table with a schema comment line; returns the SHA-256 of the file"""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        handle.write(f"# schema: tmlab.{table.name}.{SCHEMA_VERSION}\n")
        writer = csv.writer(handle, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([format_value(v) for v in row])
    return hashlib.sha256(path.read_bytes()).hexdigest()


def read_table(path: Path) -> Table:
    """Read a table written by write_table back as strings"""
    with open(path, newline="", encoding="utf-8") as handle:
        header = handle.readline().strip()
        name = header.split("tmlab.", 1)[1].rsplit(".", 1)[0]
        reader = csv.reader(handle)
        columns = next(reader)
        return Table(name=name, columns=columns, rows=[tuple(r) for r in reader])


class CsvWriter(OutputWriter):
    """data/<table>.csv for every table"""

    def __init__(self):
        self.checksums: Dict[str, str] = {}

    def write(self, result: PipelineResult, directory) -> List[str]:
        written = []
        for table in result.tables:
            relative = f"data/{table.name}.csv"
            self.checksums[relative] = write_table(table, Path(directory) / relative)
            written.append(relative)
        logger.debug(f"Wrote {len(written)} tables to {directory}")
        return written


class PlotWriter(OutputWriter):
    """plots/<plot>.png rendered off-screen"""

    def write(self, result: PipelineResult, directory) -> List[str]:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        written = []
        for plot in result.plots:
            relative = f"plots/{plot.name}.png"
            path = Path(directory) / relative
            path.parent.mkdir(parents=True, exist_ok=True)
            fig, ax = plt.subplots(figsize=(6, 4.5))
            self._draw(ax, fig, plot)
            fig.tight_layout()
            fig.savefig(path, dpi=120, metadata={"Software": None})
            plt.close(fig)
            written.append(relative)
        return written

    @staticmethod
    def _draw(ax, fig, plot: Plot):
        if plot.image is not None:
            mesh = ax.imshow(np.asarray(plot.image).T, origin="lower", aspect="auto", extent=plot.extent,
                             cmap="viridis")
            fig.colorbar(mesh, ax=ax, label=plot.colorbar)
        for s in plot.series:
            ax.plot(s.x, s.y, s.style, label=s.label)
        if any(s.label for s in plot.series):
            ax.legend(fontsize="small")
        ax.set_title(plot.title)
        ax.set_xlabel(plot.xlabel)
        ax.set_ylabel(plot.ylabel)


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else str(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, complex):
        return [value.real, value.imag]
    return value


def write_manifest(manifest: Dict[str, Any], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(_jsonable(manifest), handle, indent=2, sort_keys=True)
        handle.write("\n")
