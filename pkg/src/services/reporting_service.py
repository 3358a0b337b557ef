"""
Result emission: CSV tables with a metadata header and JSON sidecars.

Result files carry no timestamps, so identical inputs give byte-identical
output.
"""

import csv
import io
import json
import logging
import platform
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
import scipy
import yaml

from .. import __version__

logger = logging.getLogger(__name__)

NA = "NA"


def format_value(value: Any) -> str:
    """Locale-free text for one CSV cell; 'NA' for undefined values."""
    if value is None:
        return NA
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if value != value:
            return NA
        return repr(value)
    if isinstance(value, Fraction):
        return str(value) if value.denominator != 1 else str(value.numerator)
    return str(value)


def _plain(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return [_plain(item) for item in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, Path):
        return str(value)
    return str(value)


def run_metadata(seed: int, config_hash: str, recipe: Optional[str] = None,
                 variant: Optional[str] = None, **extra: Any) -> Dict[str, Any]:
    """Header fields shared by every result file."""
    metadata: Dict[str, Any] = {
        "tool_version": __version__,
        "seed": seed,
        "config_hash": config_hash,
    }
    if recipe:
        metadata["recipe"] = recipe
    if variant:
        metadata["variant"] = variant
    metadata.update(extra)
    return metadata


def library_versions() -> Dict[str, str]:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pyyaml": yaml.__version__,
    }


def render_csv(rows: Sequence[Dict[str, Any]], metadata: Dict[str, Any],
               columns: Optional[List[str]] = None) -> str:
    buffer = io.StringIO()
    for key, value in metadata.items():
        buffer.write(f"# {key}: {format_value(value)}\n")
    if columns is None:
        columns = []
        for row in rows:
            columns.extend(key for key in row if key not in columns)
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(row.get(column)) for column in columns])
    return buffer.getvalue()


def write_csv(path: Path, rows: Sequence[Dict[str, Any]], metadata: Dict[str, Any],
              columns: Optional[List[str]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(render_csv(rows, metadata, columns))
    logger.info(f"💾 Wrote {len(rows)} rows to {path}")
    return path


def write_json(path: Path, payload: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, indent=2, sort_keys=True, default=_plain, ensure_ascii=False, allow_nan=False)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(text + "\n")
    logger.info(f"💾 Wrote {path}")
    return path


def format_table(rows: Iterable[Dict[str, Any]], columns: Sequence[str]) -> str:
    """Fixed-width text table for terminal output."""
    cells = [[column for column in columns]]
    cells.extend([format_value(row.get(column)) for column in columns] for row in rows)
    widths = [max(len(line[index]) for line in cells) for index in range(len(columns))]
    lines = ["  ".join(cell.rjust(width) for cell, width in zip(line, widths)) for line in cells]
    lines.insert(1, "  ".join("-" * width for width in widths))
    return "\n".join(lines)
