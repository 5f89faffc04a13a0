import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from glyphfuse.errors import DimensionError, NumericError
from glyphfuse.numerics import (
    Conv2d,
    Linear,
    Module,
    Parameter,
    Tensor,
    bilinear_resize,
    conv2d,
    grad_check,
    layer_norm,
    load_arrays,
    matmul,
    no_grad,
    save_arrays,
    softmax,
    softpool,
)


def t64(a, grad=True):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad)


def triple_loop_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


def direct_conv(x, w, stride, pad):
    """Reference cross-correlation with explicit loops."""
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    b, c, h, wd = xp.shape
    o, _, k, _ = w.shape
    ho, wo = (h - k) // stride + 1, (wd - k) // stride + 1
    out = np.zeros((b, o, ho, wo))
    for n in range(b):
        for q in range(o):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[n, :, i * stride : i * stride + k, j * stride : j * stride + k]
                    out[n, q, i, j] = np.sum(patch * w[q])
    return out


# ------------------------------------------------------------------ matmul
def test_matmul_identity_and_pickout():
    a = t64([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(t64(np.eye(2)), a).data, a.data)
    assert matmul(t64([[1.0, 0.0]]), t64([[0.0], [5.0]])).data.tolist() == [[0.0]]


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(3)
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
    np.testing.assert_allclose(matmul(t64(a), t64(b)).data, triple_loop_matmul(a, b), atol=1e-12)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(t64(np.ones((2, 3))), t64(np.ones((2, 3))))


# ----------------------------------------------------------------- softmax
def test_softmax_examples():
    np.testing.assert_allclose(softmax(t64([0.0, 0.0])).data, [0.5, 0.5])
    np.testing.assert_allclose(softmax(t64([0.0, math.log(3.0)])).data, [0.25, 0.75], atol=1e-15)
    out = softmax(t64([1000.0, 1000.0])).data
    assert np.all(np.isfinite(out))
    np.testing.assert_array_equal(out, [0.5, 0.5])


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)),
              elements=st.floats(-50, 50)))
def test_softmax_rows_are_distributions(x):
    out = softmax(t64(x, grad=False), axis=-1).data
    np.testing.assert_allclose(out.sum(-1), 1.0, atol=1e-9)
    assert np.all(out > 0) and np.all(out <= 1)


# -------------------------------------------------------------- layer norm
def test_layer_norm_examples():
    one, zero = t64([1.0, 1.0]), t64([0.0, 0.0])
    np.testing.assert_array_equal(layer_norm(t64([[4.0, 4.0]]), one, zero).data, [[0.0, 0.0]])
    np.testing.assert_allclose(layer_norm(t64([[1.0, 3.0]]), one, zero).data, [[-1.0, 1.0]], atol=1e-5)
    x = t64(np.random.default_rng(0).standard_normal((3, 2)))
    out = layer_norm(x, zero, t64([7.0, 7.0])).data
    np.testing.assert_array_equal(out, np.full((3, 2), 7.0))


def test_layer_norm_rejects_wrong_affine_shape():
    with pytest.raises(DimensionError):
        layer_norm(t64(np.ones((2, 3))), t64(np.ones(2)), t64(np.zeros(2)))


# -------------------------------------------------------------------- conv
def test_conv_identity_kernel_preserves_input():
    x = t64(np.random.default_rng(1).standard_normal((1, 1, 5, 5)))
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 1, 1] = 1.0
    np.testing.assert_array_equal(conv2d(x, t64(k), stride=1, padding=1).data, x.data)


def test_conv_all_ones_sum_and_zero_kernel():
    ones = t64(np.ones((1, 1, 3, 3)))
    assert conv2d(ones, t64(np.ones((1, 1, 3, 3)))).data.tolist() == [[[[9.0]]]]
    assert not conv2d(ones, t64(np.zeros((2, 1, 3, 3))), padding=1).data.any()


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1), (2, 0), (3, 2)])
def test_conv_matches_direct_loops(stride, pad):
    rng = np.random.default_rng(stride * 10 + pad)
    x, w = rng.standard_normal((2, 3, 7, 6)), rng.standard_normal((4, 3, 3, 3))
    np.testing.assert_allclose(conv2d(t64(x), t64(w), stride=stride, padding=pad).data,
                               direct_conv(x, w, stride, pad), atol=1e-12)


def test_conv_output_extent_error():
    with pytest.raises(DimensionError):
        conv2d(t64(np.ones((1, 1, 2, 2))), t64(np.ones((1, 1, 3, 3))))


# ----------------------------------------------------------------- softpool
def test_softpool_examples():
    assert softpool(t64(np.zeros((1, 1, 2, 2))), 2).data.item() == 0.0
    value = softpool(t64([[[[1.0, 2.0], [3.0, 4.0]]]]), 2).data.item()
    # direct evaluation: sum(i e^i) / sum(e^i)
    assert value == pytest.approx(3.49265273458577, abs=1e-12)
    assert softpool(t64(np.full((1, 1, 4, 4), 2.5)), 2).data.tolist() == [[[[2.5, 2.5], [2.5, 2.5]]]]


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (1, 2, 4, 6), elements=st.floats(-30, 30)))
def test_softpool_is_convex_combination(x):
    out = softpool(t64(x, grad=False), 2).data
    win = x.reshape(1, 2, 2, 2, 3, 2).transpose(0, 1, 2, 4, 3, 5)
    assert np.all(out >= win.min(axis=(-2, -1)) - 1e-12)
    assert np.all(out <= win.max(axis=(-2, -1)) + 1e-12)


def test_softpool_window_too_large():
    with pytest.raises(DimensionError):
        softpool(t64(np.ones((1, 1, 1, 4))), 2)


# ------------------------------------------------------------------ resize
def test_resize_examples():
    x = t64(np.random.default_rng(2).standard_normal((1, 2, 3, 5)))
    np.testing.assert_array_equal(bilinear_resize(x, 3, 5).data, x.data)
    out = bilinear_resize(t64([[0.0, 1.0], [0.0, 1.0]]), 2, 4).data
    np.testing.assert_allclose(out, [[0.0, 0.25, 0.75, 1.0]] * 2, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1e3, 1e3), st.integers(1, 9), st.integers(1, 9), st.integers(1, 9), st.integers(1, 9))
def test_resize_constant_is_exact(c, h, w, oh, ow):
    out = bilinear_resize(t64(np.full((h, w), c), grad=False), oh, ow).data
    assert np.all(out == c)


# ------------------------------------------------------------------- autodiff
def test_backward_populates_every_reachable_tensor():
    a, b = t64([1.0, 2.0]), t64([3.0, 4.0])
    mid = a * b
    loss = (mid + a).sum()
    loss.backward()
    for t in (a, b, mid, loss):
        assert t.grad is not None and t.grad.shape == t.shape
    np.testing.assert_array_equal(a.grad, [4.0, 5.0])


def test_gradient_linearity():
    rng = np.random.default_rng(5)
    x = t64(rng.standard_normal((3, 4)))
    w = t64(rng.standard_normal((4, 2)))

    def f1():
        return softmax(matmul(x, w), -1).sum() * 0 + (matmul(x, w) ** 2).sum()

    def f2():
        return (softmax(x, -1) * 3.0).sum() + x.exp().mean()

    f1().backward()
    g1 = x.grad.copy()
    x.grad = None
    f2().backward()
    g2 = x.grad.copy()
    x.grad = None
    (f1() + f2()).backward()
    np.testing.assert_allclose(x.grad, g1 + g2, atol=1e-12, rtol=0)


def test_no_grad_records_nothing():
    x = t64([1.0])
    with no_grad():
        y = x * 2
    assert not y.requires_grad


# ---------------------------------------------------------------- grad_check
def test_grad_check_linear_is_exact():
    x = t64(np.random.default_rng(0).standard_normal(6))
    assert grad_check(lambda v: v.sum(), [x]) <= 1e-10


def test_grad_check_softmax_squares():
    x = t64(np.random.default_rng(1).standard_normal(5))
    assert grad_check(lambda v: (softmax(v) ** 2).sum(), [x]) <= 1e-6


@pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
def test_grad_check_requires_fp64_and_finite():
    with pytest.raises(NumericError):
        grad_check(lambda v: v.sum(), [Tensor(np.ones(2, dtype=np.float32), requires_grad=True)])
    with pytest.raises(NumericError):
        grad_check(lambda v: v.log().sum(), [t64([-1.0])])


def test_grad_check_catches_wrong_gradient():
    from glyphfuse.numerics.tensor import make

    def bad_square(v):
        return make(v.data**2, (v,), lambda g: (g * v.data,))  # missing factor 2

    assert grad_check(lambda v: bad_square(v).sum(), [t64([1.0, 2.0])]) > 0.1


# -------------------------------------------------------------- modules, io
class _Tiny(Module):
    def __init__(self):
        rng = np.random.default_rng(0)
        self.conv = Conv2d(1, 2, 3, rng=rng)
        self.heads = [Linear(2, 2, rng=rng), Linear(2, 3, rng=rng)]
        self.scale = Parameter(np.ones(1, dtype=np.float32))


def test_parameter_names_unique_and_stable():
    names = [n for n, _ in _Tiny().named_parameters()]
    assert names == ["conv.weight", "conv.bias", "heads.0.weight", "heads.0.bias",
                     "heads.1.weight", "heads.1.bias", "scale"]


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    model = _Tiny()
    rng = np.random.default_rng(9)
    for p in model.parameters():
        p.data = rng.standard_normal(p.shape).astype(np.float32)
    save_arrays(tmp_path / "ckpt", model.state_dict())
    loaded = load_arrays(tmp_path / "ckpt")
    for name, arr in model.state_dict().items():
        assert loaded[name].tobytes() == arr.tobytes()
    manifest = (tmp_path / "ckpt.json").read_text(encoding="utf-8")
    assert '"offset"' in manifest and '"conv.weight"' in manifest
    raw = (tmp_path / "ckpt.bin").read_bytes()
    first = np.frombuffer(raw, dtype="<f4", count=model.conv.weight.size)
    assert first.tobytes() == model.conv.weight.data.astype("<f4").tobytes()


def test_grouped_conv_equals_separate_convs():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((2, 6, 5, 5))
    w = rng.standard_normal((9, 2, 3, 3))
    out = conv2d(t64(x), t64(w), stride=2, padding=1, groups=3).data
    for gi in range(3):
        ref = direct_conv(x[:, 2 * gi : 2 * gi + 2], w[3 * gi : 3 * gi + 3], 2, 1)
        np.testing.assert_allclose(out[:, 3 * gi : 3 * gi + 3], ref, atol=1e-12)
