"""SEGT binary tensor files.

Layout (all integers little-endian)::

    magic   4 bytes  b"SEGT"
    version u8       1
    dtype   u8       1 = float32, 2 = float64
    rank    u8       0..4
    dims    rank x u32
    payload prod(dims) values, row-major, little-endian
"""

from __future__ import annotations

import struct
from math import prod

import numpy as np

from ..errors import FormatError

MAGIC = b"SEGT"
VERSION = 1
MAX_RANK = 4
DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
CODES = {np.dtype("float32"): 1, np.dtype("float64"): 2}


def encode(array) -> bytes:
    arr = np.asarray(array)
    if arr.dtype not in CODES:
        if np.issubdtype(arr.dtype, np.integer) or arr.dtype == bool:
            arr = arr.astype(np.float64)
        else:
            raise FormatError(f"unsupported dtype {arr.dtype}; use float32 or float64")
    if arr.ndim > MAX_RANK:
        raise FormatError(f"rank {arr.ndim} exceeds the maximum of {MAX_RANK}")
    code = CODES[arr.dtype]
    header = MAGIC + struct.pack("<BBB", VERSION, code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + np.ascontiguousarray(arr, dtype=DTYPES[code]).tobytes()


def decode(data: bytes) -> np.ndarray:
    if len(data) < 7:
        raise FormatError(f"file too short for a SEGT header ({len(data)} bytes)")
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    version, code, rank = struct.unpack_from("<BBB", data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported SEGT version {version}")
    if code not in DTYPES:
        raise FormatError(f"unknown dtype code {code}")
    if rank > MAX_RANK:
        raise FormatError(f"rank {rank} exceeds the maximum of {MAX_RANK}")
    offset = 7 + 4 * rank
    if len(data) < offset:
        raise FormatError("truncated header: dims are incomplete")
    dims = struct.unpack_from(f"<{rank}I", data, 7)
    dtype = DTYPES[code]
    expected = prod(dims) * dtype.itemsize
    actual = len(data) - offset
    if actual != expected:
        kind = "truncated payload" if actual < expected else "trailing bytes after payload"
        raise FormatError(
            f"{kind}: dims {tuple(dims)} need {expected} bytes, found {actual}")
    return np.frombuffer(data, dtype=dtype, offset=offset).reshape(dims).astype(dtype.newbyteorder("="))


def write_tensor(path, array) -> None:
    data = encode(array)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise OSError(f"cannot write tensor to {path}: {exc.strerror}") from exc


def read_tensor(path) -> np.ndarray:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read tensor from {path}: {exc.strerror}") from exc
    return decode(data)
