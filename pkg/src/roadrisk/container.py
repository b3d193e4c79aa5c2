"""Versioned binary container used for datasets (``TAPD``) and checkpoints (``TAPW``).

Layout, all integers little-endian::

    magic        4 bytes
    version      u32
    header_len   u64
    header       header_len bytes of UTF-8 JSON (sorted keys)
    payload      arrays in header["arrays"] order, C order, raw bytes
    crc32        u32 over every preceding byte

Each ``header["arrays"]`` entry is ``{"name", "dtype", "shape"}`` where dtype is
a numpy dtype string with explicit byte order (``<f8``, ``<i8``, ``|u1``).
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path
from typing import Any

import numpy as np

from .errors import CorruptFile, IoError, VersionMismatch

_PREFIX = struct.Struct("<4sIQ")
_CRC = struct.Struct("<I")
_ALLOWED_DTYPES = {"<f8", "<i8", "|u1"}


def _normalise(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.dtype == np.bool_:
        return arr.astype("|u1")
    if arr.dtype.kind == "f":
        return arr.astype("<f8")
    if arr.dtype.kind in "iu":
        return arr.astype("<i8")
    raise TypeError(f"unsupported dtype {arr.dtype}")


def pack(magic: bytes, version: int, header: dict[str, Any], arrays: dict[str, np.ndarray]) -> bytes:
    if len(magic) != 4:
        raise ValueError("magic must be 4 bytes")
    specs = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(_normalise(arr))
        specs.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)})
        blobs.append(arr.tobytes(order="C"))
    full_header = dict(header)
    full_header["arrays"] = specs
    hbytes = json.dumps(full_header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = _PREFIX.pack(magic, version, len(hbytes)) + hbytes + b"".join(blobs)
    return body + _CRC.pack(zlib.crc32(body) & 0xFFFFFFFF)


def stored_crc(data: bytes) -> int:
    """The CRC32 trailer of a packed container, i.e. the checksum of everything before it.

    Hashing the whole file instead would always give the CRC-32 residue
    constant, since the trailer is the body's own checksum.
    """
    if len(data) < _CRC.size:
        raise CorruptFile("file too short to hold a checksum")
    return _CRC.unpack(data[-_CRC.size:])[0]


def unpack(data: bytes, magic: bytes, version: int) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    if len(data) < _PREFIX.size + _CRC.size:
        raise CorruptFile("file too short to hold a header")
    got_magic, got_version, hlen = _PREFIX.unpack_from(data, 0)
    if got_magic != magic:
        raise CorruptFile(f"bad magic {got_magic!r}, expected {magic!r}")
    if got_version != version:
        raise VersionMismatch(f"format version {got_version}, this build reads version {version}")
    body, (crc,) = data[:-_CRC.size], _CRC.unpack(data[-_CRC.size:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CorruptFile("CRC32 checksum mismatch (truncated or modified file)")
    start = _PREFIX.size
    try:
        header = json.loads(body[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFile(f"unreadable header: {exc}") from exc
    offset = start + hlen
    arrays = {}
    for spec in header.pop("arrays", []):
        if spec["dtype"] not in _ALLOWED_DTYPES:
            raise CorruptFile(f"unsupported dtype {spec['dtype']!r}")
        dtype = np.dtype(spec["dtype"])
        shape = tuple(spec["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(body):
            raise CorruptFile(f"array {spec['name']!r} runs past end of payload")
        arrays[spec["name"]] = np.frombuffer(body, dtype=dtype, count=nbytes // dtype.itemsize,
                                             offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(body):
        raise CorruptFile("trailing bytes after payload")
    return header, arrays


def write(path: str | Path, magic: bytes, version: int, header: dict[str, Any],
          arrays: dict[str, np.ndarray]) -> bytes:
    data = pack(magic, version, header, arrays)
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return data


def read(path: str | Path, magic: bytes, version: int) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return unpack(data, magic, version)
