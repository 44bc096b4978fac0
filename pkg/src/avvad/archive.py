"""Tensor archive: a flat, little-endian container of named n-d arrays.

Layout::

    b"AVTA" | u16 version | u32 count
    count x ( u16 name_len | name (utf-8) | u8 dtype_tag | u8 ndim
              | ndim x u64 dims | raw little-endian buffer )

The byte stream depends only on the arrays, so it is bit-exact across
platforms and suitable for content hashing.
"""
from __future__ import annotations

import hashlib
import io
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"AVTA"
VERSION = 1

_TAGS = {
    1: np.dtype("<u1"),
    2: np.dtype("<i2"),
    3: np.dtype("<i4"),
    4: np.dtype("<i8"),
    5: np.dtype("<f4"),
    6: np.dtype("<f8"),
    7: np.dtype("bool"),
}


class ArchiveError(ValueError):
    pass


def _tag_for(arr: np.ndarray) -> int:
    for tag, ref in _TAGS.items():
        if ref.kind == arr.dtype.kind and ref.itemsize == arr.dtype.itemsize:
            return tag
    raise ArchiveError(f"unsupported dtype {arr.dtype}")


def dumps(tensors: Mapping[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HI", VERSION, len(tensors)))
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        tag = _tag_for(arr)
        raw = np.ascontiguousarray(arr, dtype=_TAGS[tag]).tobytes(order="C")
        key = name.encode("utf-8")
        buf.write(struct.pack("<H", len(key)))
        buf.write(key)
        buf.write(struct.pack("<BB", tag, arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(raw)
    return buf.getvalue()


def loads(data: bytes) -> dict[str, np.ndarray]:
    if data[:4] != MAGIC:
        raise ArchiveError("not a tensor archive (bad magic)")
    version, count = struct.unpack_from("<HI", data, 4)
    if version != VERSION:
        raise ArchiveError(f"unsupported archive version {version}")
    pos = 10
    out: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + n].decode("utf-8")
            pos += n
            tag, ndim = struct.unpack_from("<BB", data, pos)
            pos += 2
            shape = struct.unpack_from(f"<{ndim}Q", data, pos)
            pos += 8 * ndim
            dtype = _TAGS[tag]
            nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            if pos + nbytes > len(data):
                raise ArchiveError(f"truncated tensor {name!r}")
            out[name] = np.frombuffer(data, dtype=dtype, count=nbytes // dtype.itemsize,
                                      offset=pos).reshape(shape).copy()
            pos += nbytes
    except (struct.error, KeyError) as exc:
        raise ArchiveError(f"corrupt tensor archive: {exc}") from exc
    if pos != len(data):
        raise ArchiveError("trailing bytes after last tensor")
    return out


def save(path, tensors: Mapping[str, np.ndarray]) -> str:
    """Write an archive and return the sha256 of its bytes."""
    data = dumps(tensors)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def load(path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
