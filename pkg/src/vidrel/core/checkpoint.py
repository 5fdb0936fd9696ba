"""Versioned binary checkpoint container.

Layout (all integers little-endian)::

    magic     8 bytes  b"VRELCKPT"
    version   u32
    meta_len  u32, then meta_len bytes of UTF-8 JSON
    count     u32
    count x entry:
        name_len u16, name bytes (UTF-8)
        dtype    u8   (0 = float32, 1 = float64)
        ndim     u8, then ndim x u32 extents
        payload  little-endian floats, C order
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"VRELCKPT"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> str:
    """Write tensors (+ JSON metadata); returns the sha256 of the written bytes."""
    blob = bytearray(MAGIC)
    blob += struct.pack("<I", VERSION)
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode()
    blob += struct.pack("<I", len(meta_bytes)) + meta_bytes
    blob += struct.pack("<I", len(tensors))
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if arr.dtype not in _CODES:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for {name}")
        code = _CODES[arr.dtype]
        nb = name.encode()
        blob += struct.pack("<H", len(nb)) + nb
        blob += struct.pack("<BB", code, arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()
    Path(path).write_bytes(bytes(blob))
    return hashlib.sha256(blob).hexdigest()


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    pos = 8
    (version,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (mlen,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    meta = json.loads(raw[pos:pos + mlen].decode())
    pos += mlen
    (count,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        name = raw[pos:pos + nlen].decode()
        pos += nlen
        code, ndim = struct.unpack_from("<BB", raw, pos)
        pos += 2
        if code not in _DTYPES:
            raise CheckpointError(f"{path}: unknown dtype code {code} for {name}")
        shape = struct.unpack_from(f"<{ndim}I", raw, pos)
        pos += 4 * ndim
        dt = _DTYPES[code]
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(raw, dtype=dt, count=n, offset=pos).reshape(shape)
        pos += n * dt.itemsize
        tensors[name] = arr.astype(dt.newbyteorder("="))
    return tensors, meta


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
