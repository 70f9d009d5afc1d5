"""Seeded random-feature embedder with Monte Carlo dropout, plus embedding I/O.

The network is a stand-in for a dropout-trained feature extractor. Nothing is
trained: weights are drawn once from the seeded stream and fixed.

Pipeline per image::

    resize (nearest) to input_size -> per-image standardisation (optional)
    -> 8x8 grid average pooling per channel -> flatten
    -> [affine -> ReLU -> dropout] * len(hidden_dims) -> affine to K

Dropout is inverted (kept units scaled by 1 / (1 - p)), so a pass with
``p = 0`` reproduces the deterministic output exactly. In a stochastic call the
masks of pass ``j`` come from ``stream(sample_seed, j)`` and are shared by
every image in the batch: each pass is one realisation of the network.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from fidtrust import npyformat
from fidtrust.augment import match_channels, resize_nearest
from fidtrust.image_metrics import ImageTensor
from fidtrust.rng import stream

log = logging.getLogger(__name__)

WEIGHT_STREAM = 2


@dataclass(frozen=True)
class ToyEmbedderConfig:
    input_size: tuple = (32, 32, 3)
    embed_dim: int = 64
    hidden_dims: tuple = (256, 128)
    dropout_rate: float = 0.2
    weight_seed: int = 0
    pool_grid: int = 8
    standardize: bool = True

    def __post_init__(self):
        object.__setattr__(self, "input_size", tuple(int(v) for v in self.input_size))
        object.__setattr__(self, "hidden_dims", tuple(int(v) for v in self.hidden_dims))
        h, w, c = self.input_size
        if c not in (1, 3):
            raise ValueError("input_size channels must be 1 or 3")
        if h < self.pool_grid or w < self.pool_grid:
            raise ValueError(f"input_size {self.input_size} smaller than the pooling grid")
        if self.embed_dim < 1 or any(d < 1 for d in self.hidden_dims):
            raise ValueError("layer widths must be >= 1")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def n_features(self) -> int:
        return self.pool_grid * self.pool_grid * self.input_size[2]


@dataclass(frozen=True)
class Embedder:
    config: ToyEmbedderConfig
    weights: tuple = field(repr=False)
    biases: tuple = field(repr=False)

    @property
    def embed_dim(self) -> int:
        return self.config.embed_dim

    def features(self, images) -> np.ndarray:
        """Pooled input features, shape (I, pool_grid**2 * C)."""
        if not images:
            raise ValueError("no images to embed")
        return np.stack([_pool_features(img, self.config) for img in images])

    def forward(self, feats: np.ndarray, masks=None, return_hidden: bool = False):
        """Run the network on pooled features.

        ``masks`` is ``None`` (dropout off) or one keep-mask per hidden layer.
        With ``return_hidden`` the post-dropout hidden activations are returned
        alongside the embedding.
        """
        p = self.config.dropout_rate
        h = feats
        hidden = []
        for layer, (w, b) in enumerate(zip(self.weights[:-1], self.biases[:-1])):
            h = np.maximum(h @ w + b, 0.0)
            if masks is not None:
                h = h * masks[layer] / (1.0 - p)
            hidden.append(h)
        out = h @ self.weights[-1] + self.biases[-1]
        return (out, hidden) if return_hidden else out

    def draw_masks(self, sample_seed: int, j: int) -> list:
        rng = stream(sample_seed, j)
        keep = 1.0 - self.config.dropout_rate
        return [(rng.random(d) < keep).astype(np.float64) for d in self.config.hidden_dims]


def build_toy_embedder(config: ToyEmbedderConfig) -> Embedder:
    """Draw fixed weights ~ N(0, 1/fan_in) and biases ~ N(0, 0.01/fan_in)."""
    dims = [config.n_features, *config.hidden_dims, config.embed_dim]
    weights, biases = [], []
    for layer, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        rng = stream(config.weight_seed, WEIGHT_STREAM, layer)
        scale = 1.0 / np.sqrt(fan_in)
        weights.append(rng.standard_normal((fan_in, fan_out)) * scale)
        biases.append(rng.standard_normal(fan_out) * 0.1 * scale)
    return Embedder(config, tuple(weights), tuple(biases))


def _pool_features(img: ImageTensor, config: ToyEmbedderConfig) -> np.ndarray:
    h, w, c = config.input_size
    px = img.pixels
    if px.shape[:2] != (h, w):
        log.info("resizing image %s to %s", px.shape[:2], (h, w))
        px = resize_nearest(px, h, w)
    px = match_channels(px, c)
    if config.standardize:
        px = px - px.mean()
        std = px.std()
        if std > 0:
            px = px / std
    g = config.pool_grid
    rows = (np.arange(g + 1) * h) // g
    cols = (np.arange(g + 1) * w) // g
    sums = np.add.reduceat(np.add.reduceat(px, rows[:-1], axis=0), cols[:-1], axis=1)
    counts = np.diff(rows)[:, None, None] * np.diff(cols)[None, :, None]
    return (sums / counts).ravel()


def embed_deterministic(e: Embedder, images) -> np.ndarray:
    """Dropout-off embeddings, shape (I, K)."""
    return e.forward(e.features(images))


def embed_single_pass(e: Embedder, images, sample_seed: int, j: int = 0) -> np.ndarray:
    """One dropout realisation (pass ``j`` of ``sample_seed``), shape (I, K)."""
    return e.forward(e.features(images), e.draw_masks(sample_seed, j))


def embed_stochastic(e: Embedder, images, n_passes: int, sample_seed: int) -> np.ndarray:
    """MC-dropout embeddings, shape (I, J, K)."""
    if n_passes < 2:
        raise ValueError(f"need J >= 2 dropout passes, got {n_passes}")
    if e.config.dropout_rate == 0.0:
        warnings.warn("dropout_rate is 0: every pass equals the deterministic embedding")
    feats = e.features(images)
    out = np.empty((feats.shape[0], n_passes, e.embed_dim))
    for j in range(n_passes):
        out[:, j, :] = e.forward(feats, e.draw_masks(sample_seed, j))
    return out


def save_embeddings(path, array, dtype="<f8") -> None:
    arr = np.asarray(array)
    if arr.ndim not in (2, 3):
        raise ValueError(f"embeddings must be rank 2 or 3, got rank {arr.ndim}")
    npyformat.save(path, arr.astype(dtype, copy=False))


def load_embeddings(path) -> np.ndarray:
    """Load a rank-2 (I, K) or rank-3 (I, J, K) embedding file."""
    arr = npyformat.load(path)
    if arr.ndim not in (2, 3):
        raise ValueError(f"wrong rank: embeddings must be rank 2 or 3, got rank {arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{path}: embeddings contain non-finite values")
    return arr
