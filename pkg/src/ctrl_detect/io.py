"""Plain CSV readers/writers shared by the CLI stages.

Matrices are headerless, one row per sample. Vectors are one value per line.
Floats are written with 17 significant digits so a write/read round trip is exact.
"""
import csv
import json
import math
from pathlib import Path

import numpy as np

from .exceptions import SchemaError

FLOAT_FMT = "%.17g"


def _rows(path):
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"{path}: file not found")
    with open(path, newline="") as fh:
        return [row for row in csv.reader(fh) if row and any(cell.strip() for cell in row)]


def read_matrix(path, *, finite=True, nonnegative=False):
    rows = _rows(path)
    if not rows:
        raise SchemaError(f"{path}: empty matrix file")
    width = len(rows[0])
    out = np.empty((len(rows), width), dtype=float)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise SchemaError(f"{path}: row {i + 1} has {len(row)} columns, expected {width}")
        try:
            vals = [float(cell) for cell in row]
        except ValueError as exc:
            raise SchemaError(f"{path}: row {i + 1}: {exc}") from None
        if finite and not all(math.isfinite(v) for v in vals):
            raise SchemaError(f"{path}: row {i + 1} contains a non-finite value")
        if nonnegative and any(v < 0 for v in vals):
            raise SchemaError(f"{path}: row {i + 1} contains a negative value")
        out[i] = vals
    return out


def read_int_vector(path):
    rows = _rows(path)
    out = []
    for i, row in enumerate(rows):
        if len(row) != 1:
            raise SchemaError(f"{path}: row {i + 1} has {len(row)} columns, expected 1")
        try:
            out.append(int(row[0]))
        except ValueError:
            raise SchemaError(f"{path}: row {i + 1}: not an integer: {row[0]!r}") from None
    if not out:
        raise SchemaError(f"{path}: empty vector file")
    return np.asarray(out, dtype=np.int64)


def read_int_row(path):
    rows = _rows(path)
    if len(rows) != 1:
        raise SchemaError(f"{path}: expected a single row, got {len(rows)}")
    try:
        return np.asarray([int(c) for c in rows[0]], dtype=np.int64)
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from None


def write_matrix(path, values):
    values = np.atleast_2d(np.asarray(values, dtype=float))
    with open(path, "w", newline="") as fh:
        for row in values:
            fh.write(",".join(FLOAT_FMT % v for v in row))
            fh.write("\n")


def write_int_vector(path, values):
    with open(path, "w", newline="") as fh:
        for v in np.asarray(values).ravel():
            fh.write(f"{int(v)}\n")


def write_int_row(path, values):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(str(int(v)) for v in values))
        fh.write("\n")


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    return obj


def write_json(path, obj):
    """Dump with sorted keys; non-finite floats become null."""
    with open(path, "w") as fh:
        json.dump(_json_safe(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def read_json(path):
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"{path}: file not found")
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON: {exc}") from None
