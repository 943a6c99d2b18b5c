"""Named-array container ("MRAF" files).

Layout, all little-endian::

    b"MRAF" 0x01  u32 count
    per record:  u16 name length, UTF-8 name, u8 dtype code, u8 ndim,
                 ndim x u64 extents, row-major payload

dtype codes: 0 float32, 1 float64, 2 complex64 (interleaved float32), 3 uint8.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"MRAF"
VERSION = 1
CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<c8"), 3: np.dtype("u1")}
_KIND_TO_CODE = {"float32": 0, "float64": 1, "complex64": 2, "uint8": 3, "bool": 3}


class ArrayFileError(ValueError):
    pass


def _code_for(name: str, arr: np.ndarray, lossy_complex: bool) -> int:
    kind = arr.dtype.name
    if kind == "complex128" and lossy_complex:
        return 2
    if kind not in _KIND_TO_CODE:
        raise ArrayFileError(f"record {name!r}: dtype {kind} is not storable "
                             "(float32, float64, complex64, uint8)")
    return _KIND_TO_CODE[kind]


def encode(arrays: dict, lossy_complex: bool = False) -> bytes:
    """Serialise ``{name: array}``; insertion order is preserved.

    ``lossy_complex`` allows complex128 arrays to be stored as complex64.
    """
    parts = [MAGIC, bytes([VERSION]), struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        code = _code_for(name, arr, lossy_complex)
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ArrayFileError(f"record name too long ({len(raw)} bytes)")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<BB", code, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=CODES[code]).tobytes())
    return b"".join(parts)


def decode(buf: bytes) -> dict:
    if buf[:4] != MAGIC:
        raise ArrayFileError("not an array file (bad magic)")
    if len(buf) < 9 or buf[4] != VERSION:
        raise ArrayFileError(f"unsupported array file version {buf[4] if len(buf) > 4 else None}")
    (count,) = struct.unpack_from("<I", buf, 5)
    pos = 9
    out: dict = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos:pos + n].decode("utf-8")
            pos += n
            code, ndim = struct.unpack_from("<BB", buf, pos)
            pos += 2
            if code not in CODES:
                raise ArrayFileError(f"record {name!r}: unknown dtype code {code}")
            shape = struct.unpack_from(f"<{ndim}Q", buf, pos)
            pos += 8 * ndim
            dt = CODES[code]
            nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
            if pos + nbytes > len(buf):
                raise ArrayFileError(f"record {name!r}: truncated payload")
            if name in out:
                raise ArrayFileError(f"duplicate record name {name!r}")
            out[name] = np.frombuffer(buf, dtype=dt, count=nbytes // dt.itemsize, offset=pos).reshape(shape).copy()
            pos += nbytes
    except struct.error as exc:
        raise ArrayFileError(f"truncated array file: {exc}") from None
    if pos != len(buf):
        raise ArrayFileError(f"{len(buf) - pos} trailing bytes after {count} records")
    return out


def write_arrays(path, arrays: dict, lossy_complex: bool = False) -> None:
    Path(path).write_bytes(encode(arrays, lossy_complex))


def read_arrays(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"array file not found: {p}")
    return decode(p.read_bytes())
