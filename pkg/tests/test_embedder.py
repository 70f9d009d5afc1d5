import warnings

import numpy as np
import pytest

from fidtrust.embedder import (
    ToyEmbedderConfig,
    build_toy_embedder,
    embed_deterministic,
    embed_single_pass,
    embed_stochastic,
    load_embeddings,
    save_embeddings,
)
from fidtrust.image_metrics import ImageTensor
from fidtrust.metrics import pvar


def images(rng, n, shape=(32, 32, 3)):
    return [ImageTensor(rng.random(shape)) for _ in range(n)]


@pytest.fixture
def emb():
    return build_toy_embedder(ToyEmbedderConfig())


def test_same_config_same_outputs(rng):
    imgs = images(rng, 3)
    a = embed_deterministic(build_toy_embedder(ToyEmbedderConfig()), imgs)
    b = embed_deterministic(build_toy_embedder(ToyEmbedderConfig()), imgs)
    assert a.tobytes() == b.tobytes()


def test_no_hidden_layers_is_one_affine_map(rng):
    e = build_toy_embedder(ToyEmbedderConfig(hidden_dims=()))
    assert len(e.weights) == 1
    imgs = images(rng, 2)
    feats = e.features(imgs)
    np.testing.assert_array_equal(embed_deterministic(e, imgs), feats @ e.weights[0] + e.biases[0])


def test_weight_seed_changes_output(rng):
    imgs = images(rng, 1)
    a = embed_deterministic(build_toy_embedder(ToyEmbedderConfig(weight_seed=1)), imgs)
    b = embed_deterministic(build_toy_embedder(ToyEmbedderConfig(weight_seed=2)), imgs)
    assert not np.array_equal(a, b)


def test_deterministic_shapes_and_repeatability(emb, rng):
    imgs = images(rng, 4)
    out = embed_deterministic(emb, imgs)
    assert out.shape == (4, 64)
    assert embed_deterministic(emb, imgs[:1]).shape == (1, 64)
    np.testing.assert_array_equal(out, embed_deterministic(emb, imgs))
    stacked = np.repeat(out[:, None, :], 5, axis=1)
    assert pvar(stacked) == 0.0


def test_resizes_and_converts_channels(emb, rng):
    out = embed_deterministic(emb, [ImageTensor(rng.random((50, 40))), ImageTensor(rng.random((16, 16, 3)))])
    assert out.shape == (2, 64) and np.all(np.isfinite(out))


def test_empty_input_rejected(emb):
    with pytest.raises(ValueError, match="no images"):
        embed_deterministic(emb, [])


def test_stochastic_shape_determinism_and_spread(emb, rng):
    imgs = images(rng, 6)
    a = embed_stochastic(emb, imgs, 20, sample_seed=9)
    assert a.shape == (6, 20, 64)
    assert a.tobytes() == embed_stochastic(emb, imgs, 20, sample_seed=9).tobytes()
    assert pvar(a) > 0
    assert not np.array_equal(a, embed_stochastic(emb, imgs, 20, sample_seed=10))


def test_single_pass_matches_stochastic_slice(emb, rng):
    imgs = images(rng, 3)
    a = embed_stochastic(emb, imgs, 4, sample_seed=5)
    np.testing.assert_array_equal(embed_single_pass(emb, imgs, 5, j=2), a[:, 2, :])


def test_zero_dropout_collapses_to_deterministic(rng):
    e = build_toy_embedder(ToyEmbedderConfig(dropout_rate=0.0))
    imgs = images(rng, 3)
    with pytest.warns(UserWarning, match="dropout_rate is 0"):
        out = embed_stochastic(e, imgs, 4, sample_seed=1)
    det = embed_deterministic(e, imgs)
    for j in range(4):
        np.testing.assert_array_equal(out[:, j, :], det)


def test_masks_shared_within_a_pass(emb, rng):
    img = images(rng, 1)[0]
    out = embed_stochastic(emb, [img, images(rng, 1)[0], img], 5, sample_seed=3)
    np.testing.assert_array_equal(out[0], out[2])


def test_needs_two_passes(emb, rng):
    with pytest.raises(ValueError, match="J >= 2"):
        embed_stochastic(emb, images(rng, 2), 1, sample_seed=0)


def test_dropout_is_unbiased_at_first_hidden_layer(emb, rng):
    feats = emb.features(images(rng, 1))
    _, (clean, *_) = emb.forward(feats, None, return_hidden=True)
    total = np.zeros_like(clean)
    n = 10000
    for j in range(n):
        _, (dropped, *_) = emb.forward(feats, emb.draw_masks(123, j), return_hidden=True)
        total += dropped
    mean = total / n
    active = clean > 1e-3 * clean.max()
    rel = np.abs(mean[active] - clean[active]) / clean[active]
    assert rel.max() < 0.02


@pytest.mark.parametrize(
    "kwargs",
    [
        {"embed_dim": 0},
        {"dropout_rate": 1.0},
        {"dropout_rate": -0.1},
        {"input_size": (4, 4, 3)},
        {"input_size": (32, 32, 2)},
        {"hidden_dims": (8, 0)},
    ],
)
def test_invalid_config(kwargs):
    with pytest.raises(ValueError):
        ToyEmbedderConfig(**kwargs)


def test_save_load_stochastic_round_trip(tmp_path, emb, rng):
    out = embed_stochastic(emb, images(rng, 3), 3, sample_seed=0)
    save_embeddings(tmp_path / "x.npy", out)
    assert load_embeddings(tmp_path / "x.npy").tobytes() == out.tobytes()


def test_no_warning_with_dropout(emb, rng):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        embed_stochastic(emb, images(rng, 2), 2, sample_seed=0)
