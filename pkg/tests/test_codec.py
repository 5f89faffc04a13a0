import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from glyphfuse.codec import (
    CodecModel,
    decode,
    encode,
    latent_losses,
    nearest_codes,
    pretrain_loss,
    quantize,
    run_pretraining,
)
from glyphfuse.config import TrainConfig
from glyphfuse.errors import DimensionError
from glyphfuse.numerics import Tensor, zero_


def as_map(vectors):
    """(N, n) rows -> (1, n, 1, N) feature map."""
    v = np.asarray(vectors, dtype=np.float64)
    return Tensor(v.T[None, :, None, :])


TWO_CODES = Tensor(np.array([[0.0, 0.0], [1.0, 1.0]]))


def test_quantize_picks_nearest_and_breaks_ties_low():
    _, idx = quantize(as_map([[0.2, 0.1], [1.0, 1.0], [0.5, 0.5]]), TWO_CODES)
    assert idx.ravel().tolist() == [0, 1, 0]


def test_quantize_exact_member_is_returned_unchanged():
    zq, idx = quantize(as_map([[1.0, 1.0]]), TWO_CODES)
    assert idx.item() == 1
    np.testing.assert_array_equal(zq.data.ravel(), [1.0, 1.0])


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (12, 3), elements=st.floats(-5, 5)))
def test_quantize_is_idempotent(vectors):
    codes = Tensor(np.random.default_rng(0).standard_normal((7, 3)))
    zq, idx = quantize(as_map(vectors), codes)
    zq2, idx2 = quantize(zq.detach(), codes)
    assert np.array_equal(zq.data, zq2.data)
    assert np.array_equal(idx, idx2)


def test_nearest_codes_chunking_matches_single_pass():
    rng = np.random.default_rng(1)
    v, c = rng.standard_normal((50, 4)), rng.standard_normal((9, 4))
    assert np.array_equal(nearest_codes(v, c, chunk=7), nearest_codes(v, c))


def test_quantize_channel_mismatch():
    with pytest.raises(DimensionError):
        quantize(Tensor(np.zeros((1, 3, 2, 2))), TWO_CODES)


def test_straight_through_passes_gradient():
    z = Tensor(np.array([[[[0.2]], [[0.1]]]]), requires_grad=True)
    zq, _ = quantize(z, TWO_CODES)
    (zq * Tensor(np.array([[[[3.0]], [[5.0]]]]))).sum().backward()
    np.testing.assert_array_equal(z.grad.ravel(), [3.0, 5.0])


def test_pretrain_loss_zero_and_unit_offset():
    img = Tensor(np.random.default_rng(0).random((1, 1, 8, 8)))
    z = as_map([[0.0, 0.0]])
    assert pretrain_loss(img, img, z, z).item() == 0.0
    assert pretrain_loss(img, img, z, as_map([[1.0, 0.0]])).item() == pytest.approx(1.25)


def test_latent_terms_stop_gradients():
    z = Tensor(np.array([[[[0.5]]]]), requires_grad=True)
    zq = Tensor(np.array([[[[1.5]]]]), requires_grad=True)
    codebook_term, commit_term = latent_losses(z, zq)
    codebook_term.backward()
    assert z.grad is None or not z.grad.any()
    assert zq.grad.item() == pytest.approx(2.0)
    z.grad = zq.grad = None
    commit_term.backward()
    assert zq.grad is None or not zq.grad.any()
    assert z.grad.item() == pytest.approx(-2.0)


def test_encoder_shapes_and_zero_image():
    model = CodecModel()
    assert encode(model, np.zeros((2, 64, 64))).shape == (2, 256, 8, 8)
    for conv in model.encoder.convs:
        conv.bias.data[:] = 0
    assert not encode(model, np.zeros((1, 64, 64))).data.any()
    with pytest.raises(DimensionError):
        encode(model, np.zeros((1, 32, 32)))


def test_zero_decoder_gives_half_grey():
    model = CodecModel(32, (4, 8), 8, 5)
    zero_(model.decoder)
    out = decode(model, Tensor(np.zeros((1, 8, 4, 4), dtype=np.float32))).data
    assert out.shape == (1, 1, 32, 32)
    assert np.all(out == 0.5)


def test_decoder_output_in_unit_range():
    model = CodecModel(32, (4, 8), 8, 5)
    z = Tensor((np.random.default_rng(3).standard_normal((2, 8, 4, 4)) * 50).astype(np.float32))
    out = decode(model, z).data
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_short_pretraining_run(tmp_path):
    cfg = TrainConfig.toy(image_size=32, pretrain_iters=30, enc_channels=(4, 8), embed_dim=8,
                          codebook_size=10)
    images = np.random.default_rng(0).random((20, 32, 32)) > 0.8
    model, history = run_pretraining(cfg, images, out_dir=tmp_path, log_every=0)
    assert len(history) == 30
    assert model.frozen and not any(p.requires_grad for p in model.parameters())
    with open(tmp_path / "codec_losses.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["iteration", "L_rec", "L_lat"] and len(rows) == 31
    again, history2 = run_pretraining(cfg, images, log_every=0)
    assert history == history2
    assert np.array_equal(model.codebook.data, again.codebook.data)
