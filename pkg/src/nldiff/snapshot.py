"""Binary snapshot format (.nldf).

Layout, all little-endian:
    magic      4 bytes  b"NLDF"
    version    u16
    ndim       u8
    sizes      ndim x u64
    spacing    f64
    extent     f64
    time       f64      (NaN when untagged)
    name_len   u16, then name_len ASCII bytes
    payload    prod(sizes) x f64, C order (last axis fastest)
"""
from __future__ import annotations

import math
import struct
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import FormatError

MAGIC = b"NLDF"
VERSION = 1


class SnapshotHeader(NamedTuple):
    sizes: tuple
    spacing: float
    extent: float
    time: float
    name: str
    version: int = VERSION


def encode(values: np.ndarray, spacing: float, extent: float, time: float | None = None,
           name: str = "field") -> bytes:
    values = np.ascontiguousarray(values, dtype="<f8")
    raw_name = name.encode("ascii")
    if len(raw_name) > 0xFFFF:
        raise FormatError("field name too long")
    head = MAGIC + struct.pack("<HB", VERSION, values.ndim)
    head += struct.pack(f"<{values.ndim}Q", *values.shape)
    head += struct.pack("<ddd", spacing, extent, math.nan if time is None else time)
    head += struct.pack("<H", len(raw_name)) + raw_name
    return head + values.tobytes(order="C")


def decode(data: bytes) -> tuple:
    """Return (header, values)."""
    if len(data) < 7 or data[:4] != MAGIC:
        raise FormatError("not an NLDF snapshot (bad magic)")
    version, ndim = struct.unpack_from("<HB", data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported snapshot version {version}; this reader knows {VERSION}")
    pos = 7
    need = pos + 8 * ndim + 24 + 2
    if len(data) < need:
        raise FormatError("truncated snapshot header")
    sizes = struct.unpack_from(f"<{ndim}Q", data, pos)
    pos += 8 * ndim
    spacing, extent, time = struct.unpack_from("<ddd", data, pos)
    pos += 24
    (nlen,) = struct.unpack_from("<H", data, pos)
    pos += 2
    if len(data) < pos + nlen:
        raise FormatError("truncated snapshot header")
    name = data[pos:pos + nlen].decode("ascii")
    pos += nlen
    count = int(np.prod(sizes, dtype=np.int64)) if ndim else 1
    if len(data) - pos != 8 * count:
        raise FormatError(f"payload holds {len(data) - pos} bytes, header implies {8 * count}")
    values = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(sizes).astype(float)
    header = SnapshotHeader(tuple(int(s) for s in sizes), spacing, extent,
                            time, name, version)
    return header, values


def write_snapshot(path, values: np.ndarray, spacing: float, extent: float,
                   time: float | None = None, name: str = "field") -> None:
    Path(path).write_bytes(encode(values, spacing, extent, time, name))


def read_snapshot(path) -> tuple:
    return decode(Path(path).read_bytes())
