"""On-disk matrix formats and small file helpers.

Binary matrix layout (little-endian)::

    offset 0   4 bytes  magic b"GRAM"
    offset 4   u32      rows
    offset 8   u32      cols
    offset 12  u32      reserved (0)
    offset 16  rows*cols float64, row-major
"""
from __future__ import annotations

import hashlib
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"GRAM"
HEADER = struct.Struct("<4sIII")


def write_matrix(path: str | Path, values: np.ndarray) -> None:
    values = np.ascontiguousarray(np.atleast_2d(values), dtype="<f8")
    rows, cols = values.shape
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, rows, cols, 0))
        fh.write(values.tobytes(order="C"))


def read_matrix(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise FormatError(f"{path}: file shorter than matrix header")
    magic, rows, cols, _ = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    expected = HEADER.size + 8 * rows * cols
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", offset=HEADER.size, count=rows * cols)
    return data.reshape(rows, cols).astype(np.float64)


def write_matrix_csv(path: str | Path, values: np.ndarray) -> None:
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    with open(path, "w") as fh:
        for row in values:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_matrix_csv(path: str | Path) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            rows.append([float(tok) for tok in line.split(",")])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise FormatError(f"{path}: empty matrix")
    if len({len(r) for r in rows}) != 1:
        raise FormatError(f"{path}: ragged rows")
    return np.array(rows, dtype=np.float64)


def load_any_matrix(path: str | Path) -> np.ndarray:
    """Read either layout, sniffing the magic bytes."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return read_matrix(path)
    return read_matrix_csv(path)


def crc32_file(path: str | Path) -> int:
    return zlib.crc32(Path(path).read_bytes()) & 0xFFFFFFFF


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def sha256_array(values: np.ndarray) -> str:
    values = np.ascontiguousarray(values, dtype="<f8")
    return hashlib.sha256(values.tobytes()).hexdigest()


def floats_to_hex(values) -> str:
    return " ".join(float(v).hex() for v in np.ravel(values))


def hex_to_floats(text: str) -> np.ndarray:
    tokens = text.split()
    return np.array([float.fromhex(t) for t in tokens], dtype=np.float64)
