"""
Plain-text persistence: field CSVs with a JSON sidecar, tables, and JSON
documents with every float written at 17 significant digits.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .grid import Grid, build_grid

__all__ = [
    "fmt_float",
    "dumps_json",
    "write_json",
    "write_table_csv",
    "read_table_csv",
    "write_field_csv",
    "read_field_csv",
]


def fmt_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    return "" if v is None else str(v)


def _json_value(v, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if v is None or (isinstance(v, (float, np.floating)) and not math.isfinite(float(v))):
        return "null"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    if isinstance(v, str):
        return json.dumps(v, ensure_ascii=False)
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json_value(x, indent, level + 1)}" for k, x in v.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(v, (list, tuple, np.ndarray)):
        if len(v) == 0:
            return "[]"
        items = [f"{pad}{_json_value(x, indent, level + 1)}" for x in v]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(v).__name__}")


def dumps_json(obj, indent: int = 2) -> str:
    """JSON text with floats at 17 significant digits and non-finite floats as null."""
    return _json_value(obj, indent, 0) + "\n"


def write_json(path, obj) -> Path:
    p = Path(path)
    p.write_text(dumps_json(obj), encoding="utf-8")
    return p


def write_table_csv(path, rows: list[dict], columns: list[str] | None = None) -> Path:
    """RFC-4180 CSV (CRLF line ends) with a header row."""
    p = Path(path)
    columns = columns or (list(rows[0]) if rows else [])
    with p.open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(columns)
        for r in rows:
            wr.writerow([_cell(r.get(c)) for c in columns])
    return p


def read_table_csv(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def write_field_csv(path, g: Grid, values, name: str = "value") -> Path:
    """One row per node (coordinates then value) plus a ``.json`` header file."""
    p = Path(path)
    v = g.check(values).ravel()
    coords = [c.ravel() for c in g.coords]
    axes = ["x", "y"][: g.dim]
    with p.open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(axes + [name])
        for i in range(v.size):
            wr.writerow([fmt_float(c[i]) for c in coords] + [fmt_float(v[i])])
    write_json(_sidecar(p), {"dim": g.dim, "n_per_axis": g.n_per_axis, "name": name})
    return p


def read_field_csv(path) -> tuple[Grid, np.ndarray]:
    """Inverse of :func:`write_field_csv`; checks the coordinates against the header."""
    p = Path(path)
    head = json.loads(_sidecar(p).read_text(encoding="utf-8"))
    g = build_grid(int(head["dim"]), int(head["n_per_axis"]))
    with p.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))[1:]
    data = np.array([[float(x) for x in r] for r in rows])
    if data.shape != (g.node_count, g.dim + 1):
        raise ValueError(f"{p}: expected {g.node_count} rows of {g.dim + 1} columns")
    for k, c in enumerate(g.coords):
        if not np.allclose(data[:, k], c.ravel(), atol=1e-12):
            raise ValueError(f"{p}: node coordinates do not match the header grid")
    return g, data[:, -1].reshape(g.shape)
