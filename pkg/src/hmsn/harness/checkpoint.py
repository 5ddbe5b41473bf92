"""Single-file checkpoints.

Layout (all integers little-endian)::

    b"HMSNCKPT"  u32 version
    u64 n  | n bytes of UTF-8 JSON metadata
    u32 count
    count x ( u32 len | name | u32 ndim | ndim x u64 dims | prod(dims) x <f8 )
    32-byte sha256 of everything before it
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import struct

import numpy as np

MAGIC = b"HMSNCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(meta: dict, tensors: dict[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    blob = json.dumps(meta, sort_keys=True).encode()
    buf.write(struct.pack("<Q", len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f8")
        key = name.encode()
        buf.write(struct.pack("<I", len(key)))
        buf.write(key)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())
    body = buf.getvalue()
    return body + hashlib.sha256(body).digest()


def loads(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if len(data) < len(MAGIC) + 4 + 32 or data[: len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint file")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checkpoint integrity hash mismatch")
    off = len(MAGIC)

    def take(fmt):
        nonlocal off
        vals = struct.unpack_from(fmt, body, off)
        off += struct.calcsize(fmt)
        return vals

    (version,) = take("<I")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (n,) = take("<Q")
    meta = json.loads(body[off:off + n].decode())
    off += n
    (count,) = take("<I")
    tensors = {}
    for _ in range(count):
        (klen,) = take("<I")
        name = body[off:off + klen].decode()
        off += klen
        (ndim,) = take("<I")
        shape = take(f"<{ndim}Q") if ndim else ()
        size = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(body, dtype="<f8", count=size, offset=off).reshape(shape).astype(np.float64)
        off += 8 * size
        tensors[name] = arr
    if off != len(body):
        raise CheckpointError("trailing bytes in checkpoint")
    return meta, tensors


def save(path: str, meta: dict, tensors: dict[str, np.ndarray]) -> None:
    """Write atomically: a partial file never replaces a good one."""
    data = dumps(meta, tensors)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def load(path: str) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        return loads(fh.read())
