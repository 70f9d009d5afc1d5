"""Model-free image similarity: mean absolute error and MS-SSIM.

MS-SSIM follows Wang, Simoncelli & Bovik (2003) with these pinned choices:

* 11x11 Gaussian window, sigma 1.5, evaluated only where it fits entirely
  inside the image (no padding);
* C1 = (0.01 R)^2, C2 = (0.03 R)^2 with R the span of the image value range;
* contrast-structure mean ``cs_s`` at every scale, and the mean of the full
  SSIM map (luminance x contrast-structure) at the coarsest scale;
* 2x2 mean pooling between scales (an odd trailing row/column is dropped);
* scale weights (0.0448, 0.2856, 0.3001, 0.2363, 0.1333); with fewer than five
  scales the leading weights are used, renormalised to sum to one;
* per-scale means are clipped at 0 before exponentiation;
* multi-channel images: per-channel MS-SSIM, then the channel average.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
K1 = 0.01
K2 = 0.03


@dataclass(frozen=True)
class ImageTensor:
    """An ``H x W x C`` float image (C in {1, 3}) and its nominal value range."""

    pixels: np.ndarray
    value_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"image must be HxW or HxWxC with C in (1, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image has an empty spatial dimension")
        if not np.all(np.isfinite(px)):
            raise ValueError("image contains non-finite pixels")
        lo, hi = (float(v) for v in self.value_range)
        if not lo < hi:
            raise ValueError(f"invalid value range ({lo}, {hi})")
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "value_range", (lo, hi))

    @property
    def shape(self):
        return self.pixels.shape

    @property
    def span(self) -> float:
        return self.value_range[1] - self.value_range[0]

    def with_pixels(self, pixels) -> "ImageTensor":
        return ImageTensor(pixels, self.value_range)


def _check_pair(a: ImageTensor, b: ImageTensor):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def mae(a: ImageTensor, b: ImageTensor) -> float:
    """Mean absolute pixel difference over all pixels and channels."""
    _check_pair(a, b)
    return float(np.abs(a.pixels - b.pixels).mean())


def gaussian_window_1d(size: int = WINDOW_SIZE, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable correlation, then crop to positions where the window fits
    half = g.size // 2
    out = correlate1d(img, g, axis=0, mode="constant")
    out = correlate1d(out, g, axis=1, mode="constant")
    return out[half:img.shape[0] - half, half:img.shape[1] - half]


def _ssim_terms(x: np.ndarray, y: np.ndarray, c1: float, c2: float, g: np.ndarray):
    mu_x = _filter_valid(x, g)
    mu_y = _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mu_x * mu_x
    syy = _filter_valid(y * y, g) - mu_y * mu_y
    sxy = _filter_valid(x * y, g) - mu_x * mu_y
    cs = (2.0 * sxy + c2) / (sxx + syy + c2)
    lum = (2.0 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1)
    return float(cs.mean()), float((lum * cs).mean())


def _pool2(x: np.ndarray) -> np.ndarray:
    h, w = (x.shape[0] // 2) * 2, (x.shape[1] // 2) * 2
    x = x[:h, :w]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def max_scales(height: int, width: int, window: int = WINDOW_SIZE) -> int:
    """Largest number of MS-SSIM scales an ``height x width`` image supports."""
    n = 0
    while min(height, width) >= (2 ** n) * window and n < len(MS_SSIM_WEIGHTS):
        n += 1
    return n


def scale_weights(scales: int) -> np.ndarray:
    if not 1 <= scales <= len(MS_SSIM_WEIGHTS):
        raise ValueError(f"scales must be in 1..{len(MS_SSIM_WEIGHTS)}, got {scales}")
    w = np.array(MS_SSIM_WEIGHTS[:scales])
    return w / w.sum()


def ms_ssim_channel(x: np.ndarray, y: np.ndarray, data_range: float, scales: int = 5) -> float:
    """MS-SSIM of two single-channel 2-D arrays."""
    weights = scale_weights(scales)
    need = 2 ** (scales - 1) * WINDOW_SIZE
    if min(x.shape) < need:
        raise ValueError(
            f"image {x.shape} too small for {scales} scales (min side {need})"
        )
    g = gaussian_window_1d()
    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2
    result = 1.0
    for s in range(scales):
        cs, full = _ssim_terms(x, y, c1, c2, g)
        term = full if s == scales - 1 else cs
        result *= max(term, 0.0) ** weights[s]
        if s < scales - 1:
            x, y = _pool2(x), _pool2(y)
    return float(result)


def ms_ssim(a: ImageTensor, b: ImageTensor, scales: int | None = 5) -> float:
    """Multi-scale SSIM between two images of identical shape.

    ``scales=None`` picks the largest pyramid the image size supports.
    The dynamic range ``R`` is the span of ``a.value_range``.
    """
    _check_pair(a, b)
    h, w, n_ch = a.shape
    if scales is None:
        scales = max_scales(h, w)
        if scales == 0:
            raise ValueError(f"image {a.shape[:2]} smaller than the {WINDOW_SIZE}x{WINDOW_SIZE} window")
    vals = [
        ms_ssim_channel(a.pixels[:, :, ch], b.pixels[:, :, ch], a.span, scales)
        for ch in range(n_ch)
    ]
    return float(np.mean(vals))


def mean_pairwise(metric, originals, augmented, **kwargs) -> float:
    """Average ``metric`` over aligned pairs of image lists."""
    if len(originals) != len(augmented):
        raise ValueError("image lists differ in length")
    if not originals:
        raise ValueError("no image pairs")
    return float(np.mean([metric(a, b, **kwargs) for a, b in zip(originals, augmented)]))
