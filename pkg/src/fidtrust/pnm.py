"""Image file I/O: binary 8-bit PGM (P5) / PPM (P6) and ``.npy`` arrays.

PNM files load with value range (0, 255) (or (0, maxval)). ``.npy`` images
are H x W or H x W x C float arrays and load with range (0, 1) unless told
otherwise.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from fidtrust import npyformat
from fidtrust.image_metrics import ImageTensor

IMAGE_SUFFIXES = (".pgm", ".ppm", ".pnm", ".npy")


def _tokens(buf: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    out, pos = [], 0
    while len(out) < count:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PNM header")
        out.append(buf[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return out, pos + 1


def decode_pnm(buf: bytes) -> ImageTensor:
    tokens, offset = _tokens(buf, 4)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported PNM type {magic!r}; only binary P5/P6")
    width, height, maxval = (int(t) for t in tokens[1:])
    if not 0 < maxval < 256:
        raise ValueError(f"only 8-bit PNM supported (maxval {maxval})")
    channels = 3 if magic == b"P6" else 1
    n = width * height * channels
    raster = buf[offset:offset + n]
    if len(raster) != n:
        raise ValueError("truncated PNM raster")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, channels)
    return ImageTensor(pixels.astype(np.float64), (0.0, float(maxval)))


def encode_pnm(img: ImageTensor) -> bytes:
    """8-bit PGM/PPM bytes; pixels are mapped from the value range to 0..255."""
    lo, hi = img.value_range
    scaled = np.clip((img.pixels - lo) / (hi - lo) * 255.0, 0.0, 255.0)
    raster = np.floor(scaled + 0.5).astype(np.uint8)
    h, w, c = raster.shape
    magic = b"P6" if c == 3 else b"P5"
    return magic + f"\n{w} {h}\n255\n".encode("ascii") + raster.tobytes()


def read_image(path, npy_range=(0.0, 1.0)) -> ImageTensor:
    path = Path(path)
    if path.suffix.lower() == ".npy":
        return ImageTensor(npyformat.load(path), npy_range)
    return decode_pnm(path.read_bytes())


def write_image(path, img: ImageTensor) -> None:
    path = Path(path)
    if path.suffix.lower() == ".npy":
        npyformat.save(path, img.pixels if img.shape[2] > 1 else img.pixels[:, :, 0])
        return
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
    tmp.write_bytes(encode_pnm(img))
    os.replace(tmp, path)


def list_images(directory) -> list:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def read_image_dir(directory, npy_range=(0.0, 1.0)) -> tuple[list, list]:
    """Load every supported image in ``directory`` in sorted filename order."""
    paths = list_images(directory)
    if not paths:
        raise ValueError(f"no images (*.pgm, *.ppm, *.npy) in {directory}")
    return [read_image(p, npy_range) for p in paths], paths
