"""Flat-file artifacts: round-trip CSV tables, JSON sidecars and the run manifest."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable

import numpy as np

from .montecarlo import ResultTable

__all__ = ["OutputExistsError", "format_value", "table_to_csv", "write_csv", "write_json", "read_csv", "check_writable"]


class OutputExistsError(FileExistsError):
    pass


def format_value(value) -> str:
    """Integers verbatim, floats with 17 significant digits (exact round trip)."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    x = float(value)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def table_to_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    names = list(table.columns)
    writer.writerow(names)
    for k in range(table.n_rows):
        writer.writerow([format_value(table.columns[name][k]) for name in names])
    return buf.getvalue()


def write_csv(table: ResultTable, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(table_to_csv(table))
    return path


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _clean(obj):
    # JSON has no NaN; write null instead
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def write_json(payload: dict, path: str | Path) -> Path:
    path = Path(path)
    text = json.dumps(_clean(json.loads(json.dumps(payload, default=_json_default))), indent=2, sort_keys=False)
    path.write_text(text + "\n")
    return path


def read_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Load a table written by write_csv back into float columns."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {name: np.array([float(r[k]) for r in body]) for k, name in enumerate(header)}


def check_writable(paths: Iterable[Path], force: bool) -> None:
    existing = [str(p) for p in paths if Path(p).exists()]
    if existing and not force:
        raise OutputExistsError(f"refusing to overwrite {', '.join(existing)} (pass --force)")
