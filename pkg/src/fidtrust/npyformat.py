"""Minimal reader/writer for the ``.npy`` array interchange format.

Only what embedding and image files need: C-ordered little-endian float32 /
float64 arrays. Files are written as version 1.0 (magic ``\\x93NUMPY``,
version bytes ``01 00``, uint16 little-endian header length, ASCII header dict
space-padded and newline-terminated so the data starts on a 64-byte boundary).
Version 2.0 headers (uint32 length) are accepted on read.
"""

from __future__ import annotations

import ast
import os
import struct

import numpy as np

MAGIC = b"\x93NUMPY"
ALIGN = 64
SUPPORTED_DESCR = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


class NpyFormatError(ValueError):
    pass


def _header_bytes(descr: str, shape: tuple) -> bytes:
    shape_repr = repr(tuple(int(d) for d in shape))
    text = "{'descr': '%s', 'fortran_order': False, 'shape': %s, }" % (descr, shape_repr)
    prefix = len(MAGIC) + 2 + 2
    pad = ALIGN - (prefix + len(text) + 1) % ALIGN
    text = text + " " * (pad % ALIGN) + "\n"
    return text.encode("latin1")


def to_bytes(array) -> bytes:
    arr = np.asarray(array)
    dtype = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
    descr = dtype.str.replace("=", "<").replace("|", "<")
    if descr not in SUPPORTED_DESCR:
        raise NpyFormatError(f"unsupported dtype {arr.dtype}; only float32/float64")
    header = _header_bytes(descr, arr.shape)
    if len(header) > 0xFFFF:
        raise NpyFormatError("header too long for format version 1.0")
    data = np.ascontiguousarray(arr, dtype=SUPPORTED_DESCR[descr]).tobytes(order="C")
    return MAGIC + b"\x01\x00" + struct.pack("<H", len(header)) + header + data


def save(path, array) -> None:
    """Write ``array`` to ``path``; the file appears atomically."""
    payload = to_bytes(array)
    tmp = f"{os.fspath(path)}.tmp-{os.getpid()}"
    try:
        with open(tmp, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def from_bytes(buf: bytes) -> np.ndarray:
    if buf[:6] != MAGIC:
        raise NpyFormatError("not an .npy file (bad magic)")
    major = buf[6]
    if major == 1:
        (hlen,) = struct.unpack("<H", buf[8:10])
        start = 10
    elif major in (2, 3):
        (hlen,) = struct.unpack("<I", buf[8:12])
        start = 12
    else:
        raise NpyFormatError(f"unsupported format version {major}.{buf[7]}")
    try:
        header = ast.literal_eval(buf[start:start + hlen].decode("latin1"))
    except (ValueError, SyntaxError, UnicodeDecodeError) as exc:
        raise NpyFormatError(f"malformed header: {exc}") from None
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise NpyFormatError(f"malformed header: {header!r}")
    descr, fortran, shape = header["descr"], header["fortran_order"], header["shape"]
    if descr not in SUPPORTED_DESCR:
        raise NpyFormatError(f"unsupported dtype {descr!r}; only '<f4' and '<f8'")
    if fortran is not False:
        raise NpyFormatError("fortran_order arrays are not supported")
    if not isinstance(shape, tuple) or not all(isinstance(d, int) and d >= 0 for d in shape):
        raise NpyFormatError(f"malformed shape {shape!r}")
    dtype = SUPPORTED_DESCR[descr]
    count = int(np.prod(shape, dtype=np.int64))
    body = buf[start + hlen:]
    if len(body) != count * dtype.itemsize:
        raise NpyFormatError(
            f"payload holds {len(body)} bytes, header implies {count * dtype.itemsize}"
        )
    return np.frombuffer(body, dtype=dtype, count=count).reshape(shape).copy()


def load(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
