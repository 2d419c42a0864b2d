"""File formats: KPF1 binary snapshots, scalar time-series CSV, 1D profile CSV."""
from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .spectral import Field2D, Grid2D

MAGIC = b"KPF1"
# magic, Nx, Ny, Lx, L, time; little-endian, no padding
_HEADER = struct.Struct("<4sIIddd")


def write_snapshot(path, field: Field2D) -> Path:
    path = Path(path)
    g = field.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, g.Nx, g.Ny, g.Lx, g.L, float(field.time)))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes(order="C"))
    return path


def read_snapshot(path) -> Field2D:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, nx, ny, lx, L, t = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != nx * ny:
        raise ValueError(f"{path}: expected {nx * ny} values, found {body.size}")
    return Field2D(Grid2D(lx, nx, L, ny), body.reshape(nx, ny), time=t)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_table(path, columns: dict) -> Path:
    """Write equal-length columns as CSV with 17 significant digits for floats."""
    path = Path(path)
    names = list(columns)
    n = len(next(iter(columns.values()))) if columns else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for i in range(n):
            w.writerow([_fmt(columns[k][i]) for k in names])
    return path


def write_rows(path, rows: list[dict]) -> Path:
    """Write a list of dicts as CSV; the header is the union of keys in first-seen order."""
    names: list[str] = []
    for r in rows:
        for k in r:
            if k not in names:
                names.append(k)
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for r in rows:
            w.writerow([_fmt(r[k]) if k in r and r[k] is not None else "" for k in names])
    return path


def read_table(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    names, body = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(names):
        col = [r[j] for r in body]
        try:
            out[name] = np.array([float(v) for v in col])
        except ValueError:
            out[name] = col
    return out


def write_series(path, time, values, name: str = "value") -> Path:
    return write_table(path, {"time": list(time), name: list(values)})


def write_profile(path, x, values) -> Path:
    """1D profile CSV with columns (x, value)."""
    return write_table(path, {"x": list(x), "value": list(np.real(values))})
