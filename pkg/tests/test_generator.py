import numpy as np
import pytest

from glyphfuse.codec import CodecModel
from glyphfuse.config import TrainConfig
from glyphfuse.errors import ArgumentError, DimensionError
from glyphfuse.generator import (
    GeneratorModel,
    align_content,
    content_similarity,
    encode_references,
    forward,
    generate,
)
from glyphfuse.losses import elastic_loss
from glyphfuse.numerics import Tensor, grad_check

CFG = TrainConfig.toy(image_size=32, enc_channels=(4, 8), embed_dim=8, heads_component=2,
                      heads_relation=2, codebook_size=6)


def make_model(dtype=np.float32, **changes):
    cfg = CFG.with_(**changes)
    codec = CodecModel(32, cfg.enc_channels, cfg.embed_dim, cfg.codebook_size, seed=1, dtype=dtype)
    return GeneratorModel(codec, cfg, seed=2)


def inputs(seed=0, b=2, k=3, dtype=np.float32):
    rng = np.random.default_rng(seed)
    return (rng.random((b, 1, 32, 32)).astype(dtype), rng.random((b, k, 1, 32, 32)).astype(dtype))


def test_reference_maps_shape_and_determinism():
    model = make_model()
    _, refs = inputs()
    refs[:, 1] = refs[:, 0]
    maps = encode_references(model, refs).data
    assert maps.shape == (2, 3, 8, 4, 4)
    np.testing.assert_array_equal(maps[:, 0], maps[:, 1])
    perm = encode_references(model, refs[:, [2, 0, 1]]).data
    np.testing.assert_array_equal(perm, maps[:, [2, 0, 1]])


def test_default_reference_map_shape():
    cfg = TrainConfig()
    model = GeneratorModel(CodecModel(), cfg)
    assert encode_references(model, np.zeros((4, 64, 64))).shape == (1, 4, 256, 8, 8)


def test_empty_reference_set():
    with pytest.raises(ArgumentError):
        encode_references(make_model(), np.zeros((1, 0, 1, 32, 32), dtype=np.float32))


def test_content_similarity_examples():
    rng = np.random.default_rng(1)
    content = rng.standard_normal((1, 3, 2, 2))
    other = rng.standard_normal((3, 2, 2))
    other[1] = 0.0
    refs = np.stack([content[0], -content[0], other])[None]
    phi = content_similarity(Tensor(refs), Tensor(content)).data[0]
    np.testing.assert_allclose(phi[0], 1.0, atol=1e-12)
    np.testing.assert_allclose(phi[1], -1.0, atol=1e-12)
    assert phi[2, 1] == 0.0
    assert np.all(np.abs(phi) <= 1.0 + 1e-12)
    with pytest.raises(DimensionError):
        content_similarity(Tensor(refs[:, :, :2]), Tensor(content))


def test_orthogonal_channels_have_zero_similarity():
    a = np.zeros((1, 1, 2, 2))
    a[0, 0, 0, 0] = 1.0
    b = np.zeros((1, 1, 1, 2, 2))
    b[0, 0, 0, 1, 1] = 2.0
    assert content_similarity(Tensor(b), Tensor(a)).data.item() == 0.0


def test_align_content_examples():
    rng = np.random.default_rng(2)
    style = rng.standard_normal((1, 2, 3, 2, 2))
    equal = align_content(Tensor(np.zeros((1, 2, 3))), Tensor(style)).data
    np.testing.assert_allclose(equal, style.mean(axis=1), atol=1e-15)
    single = align_content(Tensor(np.ones((1, 1, 3))), Tensor(style[:, :1])).data
    np.testing.assert_allclose(single, style[:, 0], atol=1e-15)
    phi = np.zeros((1, 2, 3))
    phi[0, :, 0] = [10.0, -10.0]
    out = align_content(Tensor(phi), Tensor(style)).data
    w = (out[0, 0] - style[0, 1, 0]) / (style[0, 0, 0] - style[0, 1, 0])
    assert np.all(w >= 0.9999)


def test_generate_shape_range_and_determinism():
    model = make_model()
    content, refs = inputs()
    a = generate(model, content, refs).data
    assert a.shape == (2, 1, 32, 32)
    assert a.min() >= 0.0 and a.max() <= 1.0
    np.testing.assert_array_equal(a, generate(model, content, refs).data)


@pytest.mark.parametrize("dtype,tol", [(np.float32, 1e-5), (np.float64, 1e-9)])
def test_generate_ignores_reference_order(dtype, tol):
    model = make_model(dtype)
    content, refs = inputs(dtype=dtype)
    a = generate(model, content, refs).data
    b = generate(model, content, refs[:, [1, 2, 0]]).data
    assert np.abs(a - b).max() <= tol


def test_gradients_skip_the_frozen_codec():
    model = make_model()
    content, refs = inputs()
    out = forward(model, content, refs)
    loss = elastic_loss(Tensor(content), out.image) + out.stylized.mean()
    loss.backward()
    assert all(p.grad is None for p in model.codec.parameters())
    assert all(p.grad is not None for p in model.parameters())
    names = {n for n, _ in model.named_parameters()}
    assert not any(n.startswith("codec") for n in names)


def test_generator_gradients_fp64():
    model = make_model(np.float64)
    content, refs = inputs(b=1, k=2, dtype=np.float64)
    params = model.decoder.parameters()[-2:] + model.ref_encoder.parameters()[:2]
    assert grad_check(lambda *p: generate(model, content, refs).mean(), params) <= 1e-4
