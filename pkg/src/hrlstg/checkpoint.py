"""Versioned binary container for named float64 arrays plus JSON metadata.

Byte layout (all integers little-endian)::

    magic      8 bytes   b"HRLSTGCK"
    version    u32       currently 1
    meta_len   u32
    meta       meta_len bytes of UTF-8 JSON (sorted keys)
    n_arrays   u32
    n_arrays times:
        name_len  u16
        name      name_len bytes UTF-8
        ndim      u8
        dims      ndim x u32
        values    prod(dims) x f64, row-major
    crc32      u32 over every preceding byte

Round-trips are bit-exact.
"""
from __future__ import annotations

import json
import os
import struct
import zlib
from collections import OrderedDict
from typing import Mapping

import numpy as np

MAGIC = b"HRLSTGCK"
VERSION = 1


class CheckpointError(RuntimeError):
    """Unreadable, corrupt, or wrong-version checkpoint."""


def dumps(arrays: Mapping[str, np.ndarray], meta: Mapping) -> bytes:
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(meta_bytes)), meta_bytes, struct.pack("<I", len(arrays))]
    for name, value in arrays.items():
        arr = np.ascontiguousarray(value, dtype="<f8")
        name_bytes = name.encode()
        parts.append(struct.pack("<HB", len(name_bytes), arr.ndim) + name_bytes)
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def loads(blob: bytes) -> tuple["OrderedDict[str, np.ndarray]", dict]:
    if len(blob) < 24 or blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("checkpoint checksum mismatch")
    version, meta_len = struct.unpack_from("<II", body, 8)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    pos = 16
    meta = json.loads(body[pos:pos + meta_len].decode())
    pos += meta_len
    (count,) = struct.unpack_from("<I", body, pos)
    pos += 4
    arrays: "OrderedDict[str, np.ndarray]" = OrderedDict()
    try:
        for _ in range(count):
            name_len, ndim = struct.unpack_from("<HB", body, pos)
            pos += 3
            name = body[pos:pos + name_len].decode()
            pos += name_len
            dims = struct.unpack_from(f"<{ndim}I", body, pos)
            pos += 4 * ndim
            n = int(np.prod(dims)) if ndim else 1
            arrays[name] = np.frombuffer(body, dtype="<f8", count=n, offset=pos).reshape(dims).astype(np.float64)
            pos += 8 * n
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from exc
    if pos != len(body):
        raise CheckpointError("trailing bytes in checkpoint")
    return arrays, meta


def save(path, arrays: Mapping[str, np.ndarray], meta: Mapping) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(dumps(arrays, meta))
    os.replace(tmp, path)


def load(path) -> tuple["OrderedDict[str, np.ndarray]", dict]:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return loads(blob)
