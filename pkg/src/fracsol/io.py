"""Field dumps, CSV tables and JSON manifests."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import FracsolError
from .spectral import Field, SpectralGrid


class OutputError(FracsolError, OSError):
    """I/O failure with the offending path attached."""


def _paths(prefix) -> tuple[Path, Path]:
    prefix = Path(prefix)
    return prefix.with_name(prefix.name + ".json"), prefix.with_name(prefix.name + ".bin")


def save_field(field: Field, prefix) -> tuple[Path, Path]:
    """Write ``<prefix>.json`` (header) and ``<prefix>.bin`` (raw little-endian data)."""
    header_path, data_path = _paths(prefix)
    g = field.grid
    dtype = "c128" if field.is_complex else "f64"
    header = {
        "dim": g.dim,
        "n": g.n,
        "half_length": g.half_length,
        "dtype": dtype,
        "count": int(field.values.size),
    }
    raw = field.values.astype("<c16" if field.is_complex else "<f8", copy=False)
    try:
        header_path.parent.mkdir(parents=True, exist_ok=True)
        header_path.write_text(json.dumps(header, indent=2))
        data_path.write_bytes(np.ascontiguousarray(raw).tobytes())
    except OSError as exc:
        raise OutputError(f"cannot write field dump at {prefix}: {exc}") from exc
    return header_path, data_path


def load_field(prefix) -> Field:
    header_path, data_path = _paths(prefix)
    try:
        header = json.loads(header_path.read_text())
        raw = data_path.read_bytes()
    except OSError as exc:
        raise OutputError(f"cannot read field dump at {prefix}: {exc}") from exc
    grid = SpectralGrid(int(header["dim"]), int(header["n"]), float(header["half_length"]))
    dtype = {"c128": "<c16", "f64": "<f8"}[header["dtype"]]
    values = np.frombuffer(raw, dtype=dtype)
    if values.size != header["count"]:
        raise OutputError(f"{data_path}: expected {header['count']} values, found {values.size}")
    return Field(grid, values.reshape(grid.shape))


def _cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return value


def emit_csv(header: list[str], rows, path) -> Path:
    """Write a CSV with a mandatory header row; floats in shortest round-trip form."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\r\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
    except OSError as exc:
        raise OutputError(f"cannot write CSV at {path}: {exc}") from exc
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, Path):
        return str(obj)
    return obj


def emit_json(data: dict, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True))
    except OSError as exc:
        raise OutputError(f"cannot write JSON at {path}: {exc}") from exc
    return path
