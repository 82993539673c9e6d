"""Flat binary parameter files.

Layout: the 8-byte magic ``WEMF0001`` followed by one record per parameter,
sorted by name. Each record is ``u64 name_len, name bytes (utf-8), u64 rank,
rank x u64 extents, prod(extents) x f64 data``; all little-endian.
"""

from __future__ import annotations

import os
import struct
from typing import Mapping

import numpy as np

from .tensor import Tensor

MAGIC = b"WEMF0001"


class CheckpointError(ValueError):
    pass


def save_params(params: Mapping[str, Tensor | np.ndarray], path) -> None:
    chunks = [MAGIC]
    for name in sorted(params):
        value = params[name]
        arr = value.data if isinstance(value, Tensor) else np.asarray(value, dtype=np.float64)
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<Q", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<Q", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(chunks))
    os.replace(tmp, path)


def load_params(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {buf[:8]!r}")
    pos = 8
    out: dict[str, np.ndarray] = {}

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"{path}: truncated record")
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    while pos < len(buf):
        (nlen,) = struct.unpack("<Q", take(8))
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<Q", take(8))
        shape = struct.unpack(f"<{rank}Q", take(8 * rank))
        count = int(np.prod(shape)) if rank else 1
        data = np.frombuffer(take(8 * count), dtype="<f8").astype(np.float64)
        if name in out:
            raise CheckpointError(f"{path}: duplicate parameter {name}")
        out[name] = data.reshape(shape)
    return out
