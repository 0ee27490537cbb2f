"""Reader and writer for the binary ``TNSR`` tensor format.

Layout (all little-endian)::

    b"TNSR" | version u16 (=1) | order u16 | dims u64[order] | data f64[prod(dims)]

Data is stored in the canonical mode-0-fastest layout.
"""
from __future__ import annotations

import os
import struct

import numpy as np

from .tensor import as_tensor

MAGIC = b"TNSR"
VERSION = 1
_HEADER = struct.Struct("<4sHH")
_U64_MAX = 2**64 - 1


class TnsrFormatError(ValueError):
    """Raised for malformed TNSR payloads."""


def dumps(t) -> bytes:
    t = as_tensor(t)
    header = _HEADER.pack(MAGIC, VERSION, t.ndim)
    dims = np.asarray(t.shape, dtype="<u8").tobytes()
    data = np.asarray(t, dtype="<f8").tobytes(order="F")
    return header + dims + data


def loads(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise TnsrFormatError("truncated header")
    magic, version, order = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise TnsrFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise TnsrFormatError(f"unsupported version {version}")
    if order < 1:
        raise TnsrFormatError("order must be at least 1")
    offset = _HEADER.size
    dims_end = offset + 8 * order
    if len(buf) < dims_end:
        raise TnsrFormatError("truncated dims")
    dims = [int(n) for n in np.frombuffer(buf, dtype="<u8", count=order, offset=offset)]
    if any(n == 0 for n in dims):
        raise TnsrFormatError(f"zero extent in dims {dims}")
    count = 1
    for n in dims:
        count *= n
        if count * 8 > _U64_MAX:
            raise TnsrFormatError(f"dims {dims} overflow")
    if len(buf) - dims_end != 8 * count:
        raise TnsrFormatError(
            f"payload has {len(buf) - dims_end} bytes, dims {dims} need {8 * count}"
        )
    data = np.frombuffer(buf, dtype="<f8", count=count, offset=dims_end)
    return np.reshape(data.astype(np.float64), dims, order="F")


def save(path: str | os.PathLike, t) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(t))


def load(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        return loads(fh.read())
