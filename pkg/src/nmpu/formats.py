"""Portable file formats: tensor container, labeled-dataset CSV, atomic writes.

Tensor container layout (all little endian)::

    b"NMTC" u8 version=1 u32 n_tensors
    repeated: u16 name_len, name (utf-8), u8 ndim, u32 dims[ndim],
              float64 data[prod(dims)] (C order)
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"NMTC"
VERSION = 1


def write_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    parts = [MAGIC, struct.pack("<BI", VERSION, len(tensors))]
    for name, arr in tensors.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw_name)) + raw_name)
        parts.append(struct.pack(f"<B{a.ndim}I", a.ndim, *a.shape))
        parts.append(a.tobytes(order="C"))
    atomic_write_bytes(path, b"".join(parts))


def read_tensors(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise FormatError(f"{path}: not a tensor container")
    version, count = struct.unpack_from("<BI", data, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    pos = 9
    out = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape)
            pos += 8 * size
            out[name] = arr.astype(np.float64)
    except (struct.error, ValueError) as exc:
        raise FormatError(f"{path}: truncated tensor container") from exc
    return out


def write_dataset_csv(path, X: np.ndarray, y: np.ndarray) -> None:
    """One row per sample: features..., label."""
    lines = []
    for row, label in zip(np.asarray(X, dtype=np.float64), np.asarray(y)):
        lines.append(",".join(repr(float(v)) for v in row) + f",{int(label)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_dataset_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.shape[1] < 2:
        raise FormatError(f"{path}: need at least one feature and a label")
    return data[:, :-1], data[:, -1].astype(np.int64)


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write to a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
