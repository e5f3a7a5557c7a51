"""Binary checkpoint container.

Layout (little-endian throughout):

    magic   4s   b"MRDN"
    version u32  1
    count   u32
    entry*  { name_len u16, name utf-8, dtype u8 (1 = float32),
              rank u8, dims u32 * rank, payload float32 * prod(dims) }
    crc     u32  zlib.crc32 of every preceding byte

Entry names are unique; files are written to a temp name and renamed so an
interrupted run never leaves a partial checkpoint under the final name.
"""

from __future__ import annotations

import os
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"MRDN"
VERSION = 1
DTYPE_F32 = 1


def save_checkpoint(entries: dict[str, np.ndarray], path) -> None:
    path = Path(path)
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<II", VERSION, len(entries))
    for name, arr in entries.items():
        nb = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        if arr.ndim > 255:
            raise CheckpointError(f"{name}: rank {arr.ndim} too large")
        buf += struct.pack("<H", len(nb))
        buf += nb
        buf += struct.pack("<BB", DTYPE_F32, arr.ndim)
        buf += struct.pack(f"<{arr.ndim}I", *arr.shape)
        buf += arr.tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)))
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(bytes(buf))
    os.replace(tmp, path)


def load_checkpoint(path) -> dict[str, np.ndarray]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (stored_crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(raw[:-4]) != stored_crc:
        raise CheckpointError(f"{path}: checksum mismatch, refusing to load")
    version, count = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    pos = 12
    end = len(raw) - 4
    entries: dict[str, np.ndarray] = {}

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > end:
            raise CheckpointError(f"{path}: truncated while reading {what}")
        chunk = raw[pos:pos + n]
        pos += n
        return chunk

    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "entry header"))
        name = take(name_len, "entry name").decode("utf-8")
        dtype_tag, rank = struct.unpack("<BB", take(2, "entry header"))
        if dtype_tag != DTYPE_F32:
            raise CheckpointError(f"{path}: entry {name!r} has unknown dtype tag {dtype_tag}")
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "entry dims"))
        n_elems = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = take(4 * n_elems, f"payload of {name!r}")
        if name in entries:
            raise CheckpointError(f"{path}: duplicate entry name {name!r}")
        entries[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    if pos != end:
        raise CheckpointError(f"{path}: {end - pos} trailing bytes after last entry")
    return entries


def digest(entries: dict[str, np.ndarray]) -> int:
    """Order-sensitive content checksum (tests compare snapshots with this)."""
    crc = 0
    for name, arr in entries.items():
        crc = zlib.crc32(name.encode("utf-8"), crc)
        crc = zlib.crc32(np.ascontiguousarray(arr, dtype="<f4").tobytes(), crc)
    return crc
