"""Flat binary checkpoint format for named parameter arrays.

Layout (all integers little-endian uint32):

    magic   b"GMCKPT\\x00"     8 bytes
    version 1                  uint32
    repeated records until EOF:
        name_len               uint32
        name                   utf-8 bytes
        rank                   uint32
        extents                rank * uint32
        data                   prod(extents) * float32, little-endian

Values are stored as float32 regardless of the in-memory dtype; a
float32 state round-trips bit-exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"GMCKPT\x00\x00"
VERSION = 1


def save_checkpoint(path, named_state) -> None:
    """Write (name, tensor-or-array) pairs; names must be unique."""
    seen = set()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for name, value in named_state:
            if name in seen:
                raise CheckpointError(f"duplicate state name {name!r}")
            seen.add(name)
            arr = np.ascontiguousarray(getattr(value, "data", value), dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Read a checkpoint back into a name -> float32 array mapping."""
    blob = Path(path).read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    off = len(MAGIC)
    (version,) = struct.unpack_from("<I", blob, off)
    off += 4
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    state: dict[str, np.ndarray] = {}
    try:
        while off < len(blob):
            (name_len,) = struct.unpack_from("<I", blob, off)
            off += 4
            name = blob[off : off + name_len].decode("utf-8")
            off += name_len
            (rank,) = struct.unpack_from("<I", blob, off)
            off += 4
            shape = struct.unpack_from(f"<{rank}I", blob, off)
            off += 4 * rank
            count = int(np.prod(shape)) if rank else 1
            arr = np.frombuffer(blob, dtype="<f4", count=count, offset=off).reshape(shape)
            off += 4 * count
            state[name] = arr.copy()
    except (struct.error, ValueError) as e:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint ({e})") from None
    if off != len(blob):
        raise CheckpointError(f"{path}: trailing bytes after last record")
    return state
