import numpy as np
import pytest

from glyphfuse.adversary import DiscriminatorModel, d_loss, discriminate, g_adv_loss
from glyphfuse.errors import UnknownIdError
from glyphfuse.numerics import Tensor, grad_check, zero_


def images(b=2, seed=0, dtype=np.float32):
    return Tensor(np.random.default_rng(seed).random((b, 1, 32, 32)).astype(dtype))


def test_zero_model_scores_zero():
    model = zero_(DiscriminatorModel(3, 5, (4, 8, 8, 8)))
    scores, feats = discriminate(model, images(), [0, 1], [2, 3])
    assert np.all(scores.data == 0.0)
    assert len(feats) == model.num_layers == 4
    assert feats[-1].shape == (2, 8, 2, 2)


def test_style_label_changes_score():
    model = DiscriminatorModel(3, 5, (4, 8, 8, 8))
    x = images(1)
    a, _ = discriminate(model, x, [0], [1])
    b, _ = discriminate(model, x, [2], [1])
    assert a.item() != b.item()


def test_out_of_range_labels():
    model = DiscriminatorModel(3, 5, (4, 8, 8, 8))
    with pytest.raises(UnknownIdError):
        discriminate(model, images(1), [3], [0])
    with pytest.raises(UnknownIdError):
        discriminate(model, images(1), [0], [-1])


def test_hinge_examples():
    assert d_loss(Tensor([1.0]), Tensor([-1.0])).item() == 0.0
    assert d_loss(Tensor([0.0]), Tensor([0.0])).item() == 2.0
    assert g_adv_loss(Tensor([0.5])).item() == -0.5


def test_hinge_nonnegative_and_zero_only_past_margins():
    rng = np.random.default_rng(1)
    for _ in range(50):
        real, fake = rng.normal(0, 2, 6), rng.normal(0, 2, 6)
        value = d_loss(Tensor(real), Tensor(fake)).item()
        assert value >= 0.0
        assert (value == 0.0) == (bool(np.all(real >= 1)) and bool(np.all(fake <= -1)))


def test_generator_hinge_gradient_is_minus_one_over_batch():
    fake = Tensor(np.random.default_rng(2).standard_normal(4), requires_grad=True)
    g_adv_loss(fake).backward()
    np.testing.assert_allclose(fake.grad, -0.25)
    assert grad_check(lambda f: g_adv_loss(f), [Tensor(np.random.default_rng(3).standard_normal(4))]) <= 1e-10


def test_discriminator_gradients_fp64():
    model = DiscriminatorModel(2, 2, (2, 2, 2, 2), dtype=np.float64)
    x = Tensor(np.random.default_rng(4).random((2, 1, 16, 16)))
    params = [model.style_embed, model.content_embed, model.head.weight, model.trunk[0].weight]
    err = grad_check(lambda *p: discriminate(model, x, [0, 1], [1, 0])[0].sum(), params + [x])
    assert err <= 1e-4
