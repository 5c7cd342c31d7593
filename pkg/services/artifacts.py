"""CSV and JSON artifacts of an experiment run.

All files of a run go through one ``ArtifactWriter``. Floats are written with
``repr`` so equal results give equal bytes; with ``canonical`` set, CSV rows
are sorted before writing, which makes serial and parallel runs identical.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any

import numpy as np

from services.errors import ArtifactError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TOOL_NAME = "neuron-metastability"


def tool_version() -> str:
    try:
        return metadata.version(TOOL_NAME)
    except metadata.PackageNotFoundError:
        return "0.1.0+local"


def _cell(value: Any) -> str:
    if isinstance(value, bool | np.bool_):
        return "true" if value else "false"
    if isinstance(value, float | np.floating):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    if value is None:
        return ""
    return str(value)


def jsonable(value: Any) -> Any:
    """Plain JSON types; non-finite floats become null."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, float | np.floating):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def _sort_key(row: tuple) -> tuple:
    return tuple((0, float(v)) if isinstance(v, int | float | np.number) else (1, str(v)) for v in row)


class ArtifactWriter:
    """Single writer for every file of one run directory."""

    def __init__(self, out_dir: Path, *, canonical: bool = False):
        self.out_dir = Path(out_dir)
        self.canonical = canonical
        self.written: list[Path] = []
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ArtifactError(f"cannot create output directory {self.out_dir}: {exc}", path=self.out_dir) from exc

    def _target(self, name: str) -> Path:
        return self.out_dir / name

    def write_csv(self, name: str, header: list[str], rows) -> Path:
        path = self._target(name)
        rows = list(rows)
        if self.canonical:
            rows.sort(key=_sort_key)
        try:
            with path.open("w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(header)
                for row in rows:
                    writer.writerow([_cell(v) for v in row])
        except OSError as exc:
            raise ArtifactError(f"cannot write {path}: {exc}", path=path) from exc
        self.written.append(path)
        logger.debug(f"wrote {len(rows)} rows to {path}")
        return path

    def write_json(self, name: str, payload: dict) -> Path:
        path = self._target(name)
        try:
            path.write_text(
                json.dumps(jsonable(payload), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                encoding="utf-8",
            )
        except OSError as exc:
            raise ArtifactError(f"cannot write {path}: {exc}", path=path) from exc
        self.written.append(path)
        return path


@dataclass
class SummaryEnvelope:
    """Common frame of every summary.json."""

    experiment: str
    seed: int
    config: dict
    started_at: str
    wall_clock_seconds: float
    payload: dict
    units: dict[str, str] = field(default_factory=dict)
    partial: bool = False
    files: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        missing = sorted(k for k, v in self.payload.items() if isinstance(v, int | float) and k not in self.units)
        if missing:
            logger.warning(f"summary fields without units: {', '.join(missing)}")
        return {
            "schema_version": SCHEMA_VERSION,
            "tool": TOOL_NAME,
            "version": tool_version(),
            "experiment": self.experiment,
            "seed": self.seed,
            "config": self.config,
            "started_at": self.started_at,
            "wall_clock_seconds": self.wall_clock_seconds,
            "partial": self.partial,
            "units": self.units,
            "payload": self.payload,
            "files": self.files,
        }
