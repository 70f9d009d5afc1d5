"""Seeded synthetic image sets so every experiment runs without external data.

Kinds:

``blobs``     coloured Gaussian blobs on a tinted background
``textures``  sums of oriented sinusoidal gratings
``mixed``     alternating blobs / textures (even index blobs)

Variants: ``shift`` adds a fixed checkerboard template scaled by the shift
amount (moves the dataset mean); ``contrast`` scales each image about its own
mean (changes the covariance). Image ``i`` of a set depends only on
``(seed, i)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fidtrust.image_metrics import ImageTensor
from fidtrust.rng import stream

SYNTH_STREAM = 3
KINDS = ("blobs", "textures", "mixed")


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str = "mixed"
    n: int = 16
    shift: float = 0.0
    contrast: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown synthetic kind {self.kind!r}; choose from {KINDS}")
        if self.n < 1:
            raise ValueError("synthetic set needs n >= 1")

    @classmethod
    def parse(cls, text: str) -> "SyntheticSpec":
        """Parse ``kind:n[:key=value,...]``, e.g. ``blobs:16:shift=0.5``."""
        parts = text.split(":")
        if len(parts) < 2:
            raise ValueError(f"synthetic spec {text!r} must look like kind:n[:key=value,...]")
        kwargs = {"kind": parts[0], "n": int(parts[1])}
        if len(parts) > 2:
            for item in parts[2].split(","):
                key, _, value = item.partition("=")
                if key not in ("shift", "contrast"):
                    raise ValueError(f"unknown synthetic option {key!r}")
                kwargs[key] = float(value)
        return cls(**kwargs)


def shift_template(height: int, width: int, channels: int) -> np.ndarray:
    # 8-pixel checkerboard with opposed channel phases; neither generator
    # produces channel-anticorrelated structure, so the shift leaves the
    # distribution rather than moving within it
    yy, xx = np.mgrid[0:height, 0:width]
    checker = np.where((yy // 8 + xx // 8) % 2 == 0, 1.0, -1.0)
    phase = np.array([1.0, -1.0, 0.5]) if channels == 3 else np.array([1.0])
    return 0.5 + 0.5 * checker[:, :, None] * phase[None, None, :]


def _blobs(rng, h, w, c):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.ones((h, w, c)) * rng.uniform(0.05, 0.3, size=c)
    for _ in range(int(rng.integers(3, 7))):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        sigma = rng.uniform(0.06, 0.2) * min(h, w)
        amp = rng.uniform(0.2, 0.7, size=c)
        bump = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma ** 2))
        img += bump[:, :, None] * amp
    return img


def _textures(rng, h, w, c):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    field = np.zeros((h, w))
    for _ in range(int(rng.integers(2, 4))):
        theta = rng.uniform(0, math.pi)
        period = rng.uniform(4.0, 16.0)
        phase = rng.uniform(0, 2 * math.pi)
        field += rng.uniform(0.5, 1.0) * np.cos(
            2 * math.pi * (xx * math.cos(theta) + yy * math.sin(theta)) / period + phase
        )
    field = (field - field.min()) / (field.max() - field.min() + 1e-12)
    tint = rng.uniform(0.3, 1.0, size=c)
    return 0.1 + 0.8 * field[:, :, None] * tint


def make_image(spec: SyntheticSpec, index: int, seed: int, size=(32, 32, 3)) -> ImageTensor:
    h, w, c = size
    rng = stream(seed, SYNTH_STREAM, index)
    kind = spec.kind
    if kind == "mixed":
        kind = "blobs" if index % 2 == 0 else "textures"
    img = _blobs(rng, h, w, c) if kind == "blobs" else _textures(rng, h, w, c)
    if spec.contrast != 1.0:
        img = img.mean() + spec.contrast * (img - img.mean())
    if spec.shift:
        img = img + spec.shift * shift_template(h, w, c)
    return ImageTensor(img, (0.0, 1.0))


def make_images(spec: SyntheticSpec, seed: int, size=(32, 32, 3), start: int = 0) -> list:
    return [make_image(spec, start + i, seed, size) for i in range(spec.n)]


def apply_shift(images: list, amount: float) -> list:
    """Add the mean-shift template to existing images (pairing preserved)."""
    out = []
    for img in images:
        h, w, c = img.shape
        out.append(img.with_pixels(img.pixels + amount * shift_template(h, w, c)))
    return out
