"""Differentiable primitives used by the models and losses.

Image-like tensors use the (batch, channels, height, width) layout; ops that
act "spatially" work on the last two axes.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from ..errors import DimensionError
from .tensor import Tensor, as_tensor, make, unbroadcast


def matmul(a, b):
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return make(a.data @ b.data, (a, b), backward)


# ------------------------------------------------------------- activations
def relu(x):
    mask = x.data > 0
    return make(x.data * mask, (x,), lambda g: (g * mask,))


def leaky_relu(x, slope=0.2):
    scale = np.where(x.data > 0, 1.0, slope).astype(x.dtype)
    return make(x.data * scale, (x,), lambda g: (g * scale,))


def sigmoid(x):
    out = expit(x.data)
    return make(out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x):
    out = np.tanh(x.data)
    return make(out, (x,), lambda g: (g * (1.0 - out * out),))


def softmax(x, axis=-1):
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make(out, (x,), backward)


def logsumexp(x, axis=-1):
    m = x.data.max(axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = np.squeeze(np.log(s) + m, axis)

    def backward(g):
        return (np.expand_dims(g, axis) * e / s,)

    return make(out, (x,), backward)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalise the last axis to zero mean, unit (population) variance."""
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise DimensionError(
            f"layer_norm: gamma {gamma.shape} / beta {beta.shape} do not match "
            f"last axis of {x.shape}"
        )
    centered = x - x.mean(axis=-1, keepdims=True)
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / (var + eps).sqrt() * gamma + beta


def instance_norm(x, eps=1e-5):
    """Normalise each (sample, channel) map over its spatial axes; no affine part."""
    centered = x - x.mean(axis=(-2, -1), keepdims=True)
    var = (centered * centered).mean(axis=(-2, -1), keepdims=True)
    return centered / (var + eps).sqrt()


# ------------------------------------------------------------- convolution
def _scatter_windows(gw, in_shape, kh, kw, sh, sw, dtype):
    """Adjoint of the strided sliding-window gather (..., Ho, Wo, kh, kw)."""
    full = np.zeros(in_shape, dtype=dtype)
    ho, wo = gw.shape[-4], gw.shape[-3]
    for i in range(kh):
        for j in range(kw):
            full[..., i : i + sh * (ho - 1) + 1 : sh, j : j + sw * (wo - 1) + 1 : sw] += gw[
                ..., i, j
            ]
    return full


def conv2d(x, weight, bias=None, stride=1, padding=0, groups=1):
    """2-D cross-correlation (no kernel flip).

    ``x`` is (B, C, H, W); ``weight`` is (O, C // groups, k, k); output
    extents are ``(H + 2p - k) // stride + 1``. With ``groups`` > 1 the
    channels split into independent blocks, each with its own kernels.
    """
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise DimensionError(f"conv2d: kernel must be (O, C, k, k) and square, got {weight.shape}")
    if x.ndim != 4 or x.shape[1] != weight.shape[1] * groups or weight.shape[0] % groups:
        raise DimensionError(
            f"conv2d: input {x.shape} does not match kernel {weight.shape} with {groups} groups"
        )
    if stride < 1:
        raise DimensionError(f"conv2d: stride must be >= 1, got {stride}")
    out_ch, _, k, _ = weight.shape
    ch = x.shape[1]
    batch, _, h, w = x.shape
    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1
    if ho < 1 or wo < 1:
        raise DimensionError(
            f"conv2d: output extent {ho}x{wo} < 1 for input {x.shape}, kernel {k}, "
            f"stride {stride}, padding {padding}"
        )
    # work channel-major (C, B, H, W) so every slice copy below is contiguous
    xc = x.data.transpose(1, 0, 2, 3)
    xp = np.pad(xc, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xc
    cols = np.empty((ch, k, k, batch, ho, wo), dtype=x.dtype)
    span_h, span_w = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    for i in range(k):
        for j in range(k):
            cols[:, i, j] = xp[:, :, i : i + span_h : stride, j : j + span_w : stride]
    cols = cols.reshape(groups, -1, batch * ho * wo)
    w2 = weight.data.reshape(groups, out_ch // groups, -1)
    out = (w2 @ cols).reshape(out_ch, batch, ho, wo).transpose(1, 0, 2, 3)
    parents = [x, weight]
    if bias is not None:
        out = out + bias.data.reshape(1, -1, 1, 1)
        parents.append(bias)
    out = np.ascontiguousarray(out)

    def backward(g):
        g2 = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(groups, out_ch // groups, -1)
        gw = (g2 @ cols.transpose(0, 2, 1)).reshape(weight.shape)
        gx = None
        if x.requires_grad:
            w2t = w2.transpose(0, 2, 1)
            # rank-1 products are much faster as broadcasts than through matmul
            gcols = w2t * g2 if out_ch == groups else w2t @ g2
            gcols = gcols.reshape(ch, k, k, batch, ho, wo)
            gxp = np.zeros(xp.shape, dtype=x.dtype)
            for i in range(k):
                for j in range(k):
                    gxp[:, :, i : i + span_h : stride, j : j + span_w : stride] += gcols[:, i, j]
            if padding:
                gxp = gxp[:, :, padding : padding + h, padding : padding + w]
            gx = np.ascontiguousarray(gxp.transpose(1, 0, 2, 3))
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return make(out, parents, backward)


def _as_pair(v):
    return (v, v) if isinstance(v, (int, np.integer)) else tuple(v)


def softpool(x, window, stride=None):
    """Exponentially weighted pooling over the last two axes.

    Each output cell is ``sum_i softmax(window)_i * x_i``.
    """
    kh, kw = _as_pair(window)
    sh, sw = _as_pair(stride if stride is not None else (kh, kw))
    if kh < 1 or kw < 1:
        raise DimensionError(f"softpool: window must be >= 1, got {(kh, kw)}")
    h, w = x.shape[-2:]
    if h < kh or w < kw:
        raise DimensionError(f"softpool: spatial extent {(h, w)} smaller than window {(kh, kw)}")
    win = sliding_window_view(x.data, (kh, kw), axis=(-2, -1))[..., ::sh, ::sw, :, :]
    m = win.max(axis=(-2, -1), keepdims=True)
    e = np.exp(win - m)
    weights = e / e.sum(axis=(-2, -1), keepdims=True)
    out = (weights * win).sum(axis=(-2, -1))

    def backward(g):
        gw = g[..., None, None] * weights * (1.0 + win - out[..., None, None])
        return (_scatter_windows(gw, x.shape, kh, kw, sh, sw, x.dtype),)

    return make(out, (x,), backward)


# ----------------------------------------------------------- interpolation
def _linear_taps(n_in, n_out):
    """Half-pixel (align-corners false) source taps, clamped to the border."""
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def _tap_matrix(i0, i1, t, n_in, dtype):
    m = np.zeros((len(i0), n_in), dtype=dtype)
    rows = np.arange(len(i0))
    np.add.at(m, (rows, i0), 1.0 - t)
    np.add.at(m, (rows, i1), t)
    return m


def bilinear_resize(x, out_h, out_w):
    """Resize the last two axes with bilinear interpolation."""
    if out_h < 1 or out_w < 1:
        raise DimensionError(f"bilinear_resize: output extents must be >= 1, got {(out_h, out_w)}")
    h, w = x.shape[-2:]
    r0, r1, tr = _linear_taps(h, out_h)
    c0, c1, tc = _linear_taps(w, out_w)
    tr = tr.astype(x.dtype)[:, None]
    tc = tc.astype(x.dtype)
    # lerp form a + t (b - a) keeps constant inputs exactly constant
    top = x.data[..., r0, :]
    rows = top + tr * (x.data[..., r1, :] - top)
    left = rows[..., c0]
    out = left + tc * (rows[..., c1] - left)
    mh = _tap_matrix(r0, r1, tr[:, 0], h, x.dtype)
    mw = _tap_matrix(c0, c1, tc, w, x.dtype)

    def backward(g):
        return (mh.T @ g @ mw,)

    return make(out, (x,), backward)


def sample_bilinear(x, rows, cols):
    """Sample (B, C, H, W) at per-batch points ``rows``/``cols`` of shape (B, M).

    Coordinates are in pixel units (pixel centres at integers) and clamped to
    the image, so out-of-range samples replicate the border. Returns (B, C, M).
    """
    batch, _, h, w = x.shape
    rows = np.clip(np.asarray(rows, dtype=np.float64), 0.0, h - 1)
    cols = np.clip(np.asarray(cols, dtype=np.float64), 0.0, w - 1)
    if rows.shape != cols.shape or rows.shape[0] != batch:
        raise DimensionError(
            f"sample_bilinear: coordinate shapes {rows.shape}/{cols.shape} do not fit batch {batch}"
        )
    r0 = np.floor(rows).astype(np.intp)
    c0 = np.floor(cols).astype(np.intp)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    tr = (rows - r0).astype(x.dtype)[..., None]
    tc = (cols - c0).astype(x.dtype)[..., None]
    b = np.arange(batch)[:, None]
    # advanced indices around a slice put the (B, M) axes first: (B, M, C)
    v00, v01 = x.data[b, :, r0, c0], x.data[b, :, r0, c1]
    v10, v11 = x.data[b, :, r1, c0], x.data[b, :, r1, c1]
    top = v00 + tc * (v01 - v00)
    bottom = v10 + tc * (v11 - v10)
    out = (top + tr * (bottom - top)).transpose(0, 2, 1)

    def backward(g):
        g = g.transpose(0, 2, 1)
        full = np.zeros_like(x.data)
        np.add.at(full, (b, slice(None), r0, c0), g * (1 - tr) * (1 - tc))
        np.add.at(full, (b, slice(None), r0, c1), g * (1 - tr) * tc)
        np.add.at(full, (b, slice(None), r1, c0), g * tr * (1 - tc))
        np.add.at(full, (b, slice(None), r1, c1), g * tr * tc)
        return (full,)

    return make(np.ascontiguousarray(out), (x,), backward)
