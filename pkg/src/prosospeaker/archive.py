"""Versioned tensor-archive container.

Layout (all integers little-endian)::

    8 bytes   magic  b"PSKARCH\\0"
    u32       format version
    u64       header length in bytes
    header    UTF-8 JSON: {"metadata": {...}, "tensors": [{name, dtype, shape,
              offset, nbytes}, ...]}
    blob      concatenated row-major tensor payloads, offsets relative to blob start

Tensor dtypes are ``"<f4"`` or ``"<f8"``. The header is written with sorted
keys so identical content always produces identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct

import numpy as np

MAGIC = b"PSKARCH\0"
FORMAT_VERSION = 1
SUPPORTED_VERSIONS = (1,)
_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


class ArchiveError(ValueError):
    pass


def dumps(tensors: dict, metadata: dict | None = None, dtype: str = "<f4") -> bytes:
    """Serialize a name -> array mapping (insertion order preserved)."""
    if dtype not in _DTYPES:
        raise ArchiveError(f"unsupported dtype {dtype!r}")
    entries, chunks, offset = [], [], 0
    for name, value in tensors.items():
        arr = np.ascontiguousarray(value, dtype=_DTYPES[dtype])
        raw = arr.tobytes(order="C")
        entries.append({"name": name, "dtype": dtype, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"metadata": metadata or {}, "tensors": entries},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    return b"".join([MAGIC, struct.pack("<IQ", FORMAT_VERSION, len(header)), header, *chunks])


def loads(buf: bytes) -> tuple[dict, dict]:
    """Inverse of :func:`dumps`; returns ``(tensors, metadata)``."""
    if len(buf) < 20 or buf[:8] != MAGIC:
        raise ArchiveError("not a tensor archive (bad magic)")
    version, hlen = struct.unpack_from("<IQ", buf, 8)
    if version not in SUPPORTED_VERSIONS:
        raise ArchiveError(f"unsupported archive format version {version}")
    start = 20 + hlen
    if start > len(buf):
        raise ArchiveError("truncated archive header")
    try:
        header = json.loads(buf[20:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArchiveError(f"corrupt archive header: {exc}") from exc

    blob = memoryview(buf)[start:]
    tensors = {}
    for e in header["tensors"]:
        dt = _DTYPES.get(e["dtype"])
        if dt is None:
            raise ArchiveError(f"tensor {e['name']!r}: unsupported dtype {e['dtype']!r}")
        shape = tuple(e["shape"])
        n = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        if n != e["nbytes"] or e["offset"] + n > len(blob):
            raise ArchiveError(f"tensor {e['name']!r}: payload size mismatch")
        arr = np.frombuffer(blob[e["offset"]: e["offset"] + n], dtype=dt).reshape(shape)
        tensors[e["name"]] = arr.copy()
    return tensors, header.get("metadata", {})


def save(path, tensors: dict, metadata: dict | None = None, dtype: str = "<f4"):
    data = dumps(tensors, metadata, dtype)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def load(path) -> tuple[dict, dict]:
    try:
        with open(path, "rb") as fh:
            return loads(fh.read())
    except FileNotFoundError:
        raise ArchiveError(f"no such archive: {os.fspath(path)}") from None


def digest(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()
