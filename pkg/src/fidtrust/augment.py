"""Seeded augmentation pipelines: additive Gaussian noise and rotated overlays.

Random draws use the streams in :mod:`fidtrust.rng`:

* noise for image ``i`` of a batch: ``stream(seed_i, 0)``;
* overlay patch ``d`` of image ``i``: ``stream(seed_i, 1, d)``, drawing in
  order source index, rotation angle, row offset, column offset;

where ``seed_i = derive_image_seed(spec.seed, i)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from fidtrust.image_metrics import ImageTensor
from fidtrust.rng import stream, stream_key

NOISE_STREAM = 0
OVERLAY_STREAM = 1


@dataclass(frozen=True)
class AugmentSpec:
    kind: str = "noise"
    strength_percent: float = 0.0
    n_patches: int = 4
    patch_scale: float = 0.25
    seed: int = 0
    clip: bool = False

    def __post_init__(self):
        if self.kind not in ("noise", "overlay"):
            raise ValueError(f"unknown augmentation kind {self.kind!r}")
        if not math.isfinite(self.strength_percent) or not 0 <= self.strength_percent <= 1000:
            raise ValueError(f"strength_percent must be in [0, 1000], got {self.strength_percent}")
        if self.n_patches < 0:
            raise ValueError("n_patches must be >= 0")
        if not 0 < self.patch_scale < 1:
            raise ValueError(f"patch_scale must be in (0, 1), got {self.patch_scale}")


def derive_image_seed(seed: int, index: int) -> int:
    """Per-image seed, independent of batch order."""
    return int(stream_key(seed, index)[0])


def noise_augment(img: ImageTensor, strength_percent: float, seed: int, clip: bool = False) -> ImageTensor:
    """Add i.i.d. Gaussian noise with std = strength% of the image's max pixel.

    Every scalar entry (pixel and channel) gets its own draw. The result is not
    clipped to ``img.value_range`` unless ``clip`` is set.
    """
    if not math.isfinite(strength_percent):
        raise ValueError("strength must be finite")
    if strength_percent < 0:
        raise ValueError("strength must be >= 0")
    if strength_percent == 0:
        return img
    sigma = strength_percent / 100.0 * float(img.pixels.max())
    rng = stream(seed, NOISE_STREAM)
    out = img.pixels + sigma * rng.standard_normal(img.pixels.shape)
    if clip:
        out = np.clip(out, *img.value_range)
    return img.with_pixels(out)


def resize_nearest(pixels: np.ndarray, height: int, width: int) -> np.ndarray:
    """Nearest-neighbour resize; output pixel centres map back to source."""
    h, w = pixels.shape[:2]
    rows = np.minimum(((np.arange(height) + 0.5) * h / height).astype(np.int64), h - 1)
    cols = np.minimum(((np.arange(width) + 0.5) * w / width).astype(np.int64), w - 1)
    return pixels[rows][:, cols]


def match_channels(pixels: np.ndarray, channels: int) -> np.ndarray:
    if pixels.shape[2] == channels:
        return pixels
    if channels == 3:
        return np.repeat(pixels, 3, axis=2)
    return pixels.mean(axis=2, keepdims=True)


def rotate_nearest(pixels: np.ndarray, angle_deg: float):
    """Rotate about the centre with nearest-neighbour sampling.

    Returns ``(canvas, mask)``: the canvas covers the rotated bounding box and
    ``mask`` marks pixels that came from inside the source patch.
    """
    h, w = pixels.shape[:2]
    theta = math.radians(angle_deg)
    cos, sin = math.cos(theta), math.sin(theta)
    out_h = max(1, int(math.ceil(abs(h * cos) + abs(w * sin) - 1e-9)))
    out_w = max(1, int(math.ceil(abs(w * cos) + abs(h * sin) - 1e-9)))
    yy, xx = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    dy = yy - (out_h - 1) / 2.0
    dx = xx - (out_w - 1) / 2.0
    # inverse rotation back into source coordinates
    src_y = cos * dy - sin * dx + (h - 1) / 2.0
    src_x = sin * dy + cos * dx + (w - 1) / 2.0
    iy = np.floor(src_y + 0.5).astype(np.int64)
    ix = np.floor(src_x + 0.5).astype(np.int64)
    mask = (iy >= 0) & (iy < h) & (ix >= 0) & (ix < w)
    canvas = np.zeros((out_h, out_w, pixels.shape[2]))
    canvas[mask] = pixels[iy[mask], ix[mask]]
    return canvas, mask


def _rescale_range(pixels: np.ndarray, src: tuple, dst: tuple) -> np.ndarray:
    if src == dst:
        return pixels
    return (pixels - src[0]) / (src[1] - src[0]) * (dst[1] - dst[0]) + dst[0]


def overlay_augment(
    base: ImageTensor,
    patch_source: list,
    n_patches: int = 4,
    patch_scale: float = 0.25,
    seed: int = 0,
) -> ImageTensor:
    """Paste ``n_patches`` shrunken, randomly rotated source images onto ``base``.

    Each patch is drawn with replacement from ``patch_source``, resized so its
    longer side is ``patch_scale * min(H, W)``, rotated by a uniform angle in
    [0, 360) and pasted opaquely (only pixels inside the rotated patch) at a
    uniform position with its bounding box fully inside the base image.
    """
    if n_patches < 0:
        raise ValueError("n_patches must be >= 0")
    if n_patches == 0:
        return base
    if not patch_source:
        raise ValueError("patch_source is empty but n_patches > 0")
    if not 0 < patch_scale < 1:
        raise ValueError("patch_scale must be in (0, 1)")
    h, w, n_ch = base.shape
    side = max(1, int(round(patch_scale * min(h, w))))
    out = base.pixels.copy()
    for d in range(n_patches):
        rng = stream(seed, OVERLAY_STREAM, d)
        src = patch_source[int(rng.integers(len(patch_source)))]
        angle = float(rng.uniform(0.0, 360.0))
        sh, sw = src.shape[:2]
        scale = side / max(sh, sw)
        ph = max(1, int(round(sh * scale)))
        pw = max(1, int(round(sw * scale)))
        patch = resize_nearest(src.pixels, ph, pw)
        patch = match_channels(patch, n_ch)
        patch = _rescale_range(patch, src.value_range, base.value_range)
        canvas, mask = rotate_nearest(patch, angle)
        ch_, cw_ = mask.shape
        if ch_ > h or cw_ > w:
            raise ValueError(f"rotated patch {mask.shape} larger than base {(h, w)}")
        top = int(rng.integers(h - ch_ + 1))
        left = int(rng.integers(w - cw_ + 1))
        region = out[top:top + ch_, left:left + cw_]
        region[mask] = canvas[mask]
    return base.with_pixels(out)


def augment_one(img: ImageTensor, spec: AugmentSpec, index: int, patch_source=None) -> ImageTensor:
    seed = derive_image_seed(spec.seed, index)
    if spec.kind == "noise":
        return noise_augment(img, spec.strength_percent, seed, clip=spec.clip)
    return overlay_augment(img, patch_source or [], spec.n_patches, spec.patch_scale, seed)


def augment_set(images: list, spec: AugmentSpec, patch_source=None, threads: int = 1) -> list:
    """Apply ``spec`` to every image with a seed derived from its batch index."""
    if threads > 1 and len(images) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda p: augment_one(p[1], spec, p[0], patch_source), enumerate(images)))
    return [augment_one(img, spec, i, patch_source) for i, img in enumerate(images)]
