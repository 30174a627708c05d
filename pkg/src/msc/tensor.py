"""Dense matrix helpers and the MSC1 binary matrix format.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 with shape
``(rows, cols)``.  Signals, dictionary atoms and codes are stored as columns.
On disk the payload is column-major (Fortran order), so a dictionary's atoms
are contiguous in the file.

MSC1 layout::

    b"MSC1" | rows: u64 LE | cols: u64 LE | rows*cols float64 LE, column-major
"""
from __future__ import annotations

import csv
import os
import struct

import numpy as np

from .errors import ArgumentError, DataError, FormatError, ShapeError

MAGIC = b"MSC1"
_HEADER = struct.Struct("<4sQQ")
# Refuse headers that could not possibly be backed by a real file.
_MAX_ELEMENTS = 1 << 40


def as_matrix(a, name="matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array; 1-D input becomes a column."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ArgumentError(f"{name} contains NaN or Inf")
    return m


def as_vector(a, name="vector") -> np.ndarray:
    v = np.asarray(a, dtype=np.float64)
    if v.ndim == 2 and 1 in v.shape:
        v = v.ravel()
    if v.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ArgumentError(f"{name} contains NaN or Inf")
    return v


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def gram(d) -> np.ndarray:
    """Return ``d.T @ d``, symmetrized so the result is exactly symmetric."""
    d = as_matrix(d, "d")
    g = d.T @ d
    return (g + g.T) * 0.5


def save_matrix(m, path) -> None:
    m = as_matrix(m)
    rows, cols = m.shape
    if rows == 0 or cols == 0:
        raise ArgumentError(f"refusing to save degenerate matrix of shape {m.shape}")
    payload = np.asarray(m, dtype="<f8").tobytes(order="F")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, rows, cols))
        fh.write(payload)


def load_matrix(path) -> np.ndarray:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except FileNotFoundError as exc:
        raise DataError(f"no such matrix file: {path}") from exc
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if rows == 0 or cols == 0 or rows * cols > _MAX_ELEMENTS:
        raise FormatError(f"{path}: invalid dimensions {rows}x{cols}")
    expected = _HEADER.size + 8 * rows * cols
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    m = data.reshape((rows, cols), order="F").astype(np.float64)
    if not np.all(np.isfinite(m)):
        raise FormatError(f"{path}: non-finite payload")
    return m


def load_csv(path) -> np.ndarray:
    """Read one row per line of comma-separated decimals."""
    try:
        with open(path, newline="") as fh:
            rows = [[float(v) for v in line] for line in csv.reader(fh) if line]
    except FileNotFoundError as exc:
        raise DataError(f"no such file: {path}") from exc
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if not rows:
        raise FormatError(f"{path}: empty CSV")
    if len({len(r) for r in rows}) != 1:
        raise FormatError(f"{path}: ragged rows")
    return as_matrix(rows)


def read_any(path) -> np.ndarray:
    """Load an MSC1 file, or a CSV when the extension says so."""
    if os.fspath(path).lower().endswith(".csv"):
        return load_csv(path)
    return load_matrix(path)
