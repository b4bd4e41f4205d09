"""TEN4 binary tensor files and flat ``key = value`` config files.

TEN4 layout: magic ``b"TEN4"``, four little-endian uint32 extents W, H, C, T,
then W*H*C*T little-endian float64 values with the first mode varying fastest.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .tensor import as_tensor4

MAGIC = b"TEN4"
_HEADER = struct.Struct("<4s4I")


class FormatError(ValueError):
    pass


def encode_ten4(t) -> bytes:
    t = as_tensor4(t)
    header = _HEADER.pack(MAGIC, *t.shape)
    return header + t.ravel(order="F").astype("<f8").tobytes()


def decode_ten4(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise FormatError("truncated TEN4 header")
    magic, *dims = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if min(dims) < 1:
        raise FormatError(f"invalid extents {dims}")
    count = int(np.prod(dims, dtype=np.int64))
    expected = _HEADER.size + 8 * count
    if len(buf) != expected:
        raise FormatError(f"payload is {len(buf)} bytes, expected {expected}")
    data = np.frombuffer(buf, dtype="<f8", count=count, offset=_HEADER.size)
    if not np.all(np.isfinite(data)):
        raise FormatError("non-finite values in payload")
    return np.reshape(data.astype(np.float64), dims, order="F")


def write_ten4(path, t) -> None:
    Path(path).write_bytes(encode_ten4(t))


def read_ten4(path) -> np.ndarray:
    return decode_ten4(Path(path).read_bytes())


def parse_kv(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        if key in out:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_kv(path) -> dict:
    return parse_kv(Path(path).read_text(encoding="utf-8"))


def format_kv(items: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in items.items())
