"""WFTN tensor blob encoding.

Layout: b"WFTN", version byte (1), rank as uint32 LE, each dim as uint32 LE,
then the values as float64 LE in row-major order.
"""

import struct

import numpy as np

from .errors import FormatError
from .numerics import as_tensor

MAGIC = b"WFTN"
VERSION = 1


def encode_tensor(arr):
    arr = as_tensor(arr)
    head = MAGIC + bytes([VERSION]) + struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape)
    return head + arr.astype("<f8").tobytes()


def decode_tensor(buf, offset=0):
    """Decode one blob starting at ``offset``; returns (array, offset after blob)."""
    view = memoryview(buf)
    if len(view) - offset < 9:
        raise FormatError("truncated tensor header", offset)
    if bytes(view[offset:offset + 4]) != MAGIC:
        raise FormatError(f"bad tensor magic, expected {MAGIC.decode()!r}", offset)
    if view[offset + 4] != VERSION:
        raise FormatError(f"unsupported tensor version {view[offset + 4]}", offset + 4)
    (rank,) = struct.unpack_from("<I", view, offset + 5)
    pos = offset + 9
    if rank == 0 or rank > 16:
        raise FormatError(f"implausible tensor rank {rank}", offset + 5)
    if len(view) - pos < 4 * rank:
        raise FormatError("truncated tensor shape", pos)
    shape = struct.unpack_from(f"<{rank}I", view, pos)
    pos += 4 * rank
    if 0 in shape:
        raise FormatError(f"zero-sized dimension in shape {shape}", offset + 9)
    n = int(np.prod(shape))
    if len(view) - pos < 8 * n:
        raise FormatError(f"truncated tensor data, need {8 * n} bytes", pos)
    arr = np.frombuffer(view, dtype="<f8", count=n, offset=pos).astype(np.float64).reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise FormatError("non-finite value in tensor data", pos)
    return arr, pos + 8 * n


def save_tensor(path, arr):
    with open(path, "wb") as fh:
        fh.write(encode_tensor(arr))


def load_tensor(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    arr, end = decode_tensor(buf)
    if end != len(buf):
        raise FormatError("trailing bytes after tensor", end)
    return arr
