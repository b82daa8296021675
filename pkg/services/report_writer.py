"""
Deterministic JSON and CSV artifacts.

JSON is written with sorted keys; complex numbers become [re, im], numpy
values plain lists and non-finite floats null. CSV floats go through repr so
a rerun of the same configuration produces byte-identical files.
"""

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from config import VERSION
from models.schemas import RunConfig
from utils.logger import get_logger

logger = get_logger("report_writer")


def to_jsonable(value):
    """Recursively convert numbers, arrays and containers into JSON-safe values."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (complex, np.complexfloating)):
        return [to_jsonable(float(value.real)), to_jsonable(float(value.imag))]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def config_hash(run: RunConfig) -> str:
    """SHA-256 of the canonical JSON form of a run configuration."""
    canonical = json.dumps(to_jsonable(run.dict(by_alias=True)), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def render_json(payload: Dict, run: Optional[RunConfig] = None) -> str:
    data = dict(payload)
    data["tool_version"] = VERSION
    if run is not None:
        data["config_hash"] = config_hash(run)
    return json.dumps(to_jsonable(data), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(path, payload: Dict, run: Optional[RunConfig] = None) -> Path:
    """Write a report with tool version and (when given) the config hash embedded."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_json(payload, run), encoding="utf-8")
    logger.info(f"Wrote JSON report {path}")
    return path


def _cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def stack_columns(prefix: str, rows: np.ndarray) -> Dict[str, np.ndarray]:
    """{prefix0_re, prefix0_im, prefix1_re, ...} for a complex (k, N) array."""
    columns: Dict[str, np.ndarray] = {}
    for i, row in enumerate(np.atleast_2d(rows)):
        columns[f"{prefix}{i}_re"] = np.real(row)
        columns[f"{prefix}{i}_im"] = np.imag(row)
    return columns


def write_csv(path, grid: Sequence[float], columns: Dict[str, Iterable]) -> Path:
    """
    Write a CSV whose first column is ``t``; columns keep their insertion order.

    Raises:
        ValueError: If a column length differs from the grid length
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names: List[str] = list(columns)
    data = [np.asarray(columns[name]) for name in names]
    for name, values in zip(names, data):
        if len(values) != len(grid):
            raise ValueError(f"column '{name}' has {len(values)} rows, grid has {len(grid)}")

    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["t"] + names)
        for k, t in enumerate(grid):
            writer.writerow([_cell(float(t))] + [_cell(values[k]) for values in data])
    logger.info(f"Wrote CSV {path} ({len(grid)} rows, {len(names)} columns)")
    return path
