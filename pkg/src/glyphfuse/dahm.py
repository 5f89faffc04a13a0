"""Dual-attention hybrid module.

Two attention blocks sit between the encoders and the generation decoder:

* the component block lets the codebook attend over the reference style
  features, refines the result by propagating information between codes,
  and adds it back to the codebook (the *stylized codebook*);
* the relation block lets every content position attend over the codes,
  using the original codebook as keys and the stylized one as values, with
  local feature refiners gating queries and values.

Shapes: codebooks are (d, n) or (B, d, n); feature maps are (B, n, h, w);
style sets are (B, k, n, h, w).
"""
from __future__ import annotations

import math

import numpy as np

from .errors import DimensionError
from .numerics import (
    Conv2d,
    LayerNorm,
    Linear,
    Module,
    Parameter,
    bilinear_resize,
    matmul,
    sigmoid,
    softmax,
    softpool,
)


def _split_heads(x, heads):
    """(..., L, n) -> (..., heads, L, n // heads)."""
    *lead, length, n = x.shape
    x = x.reshape(tuple(lead) + (length, heads, n // heads))
    return x.swapaxes(-3, -2)


def _merge_heads(x):
    """(..., heads, L, m) -> (..., L, heads * m)."""
    *lead, heads, length, m = x.shape
    return x.swapaxes(-3, -2).reshape(tuple(lead) + (length, heads * m))


def attend(q, k, v):
    """Scaled dot-product attention over the second-to-last axis of ``k``/``v``.

    Returns ``(output, weights)``; weights rows sum to one.
    """
    scores = matmul(q, k.swapaxes(-1, -2)) * (1.0 / math.sqrt(q.shape[-1]))
    weights = softmax(scores, axis=-1)
    return matmul(weights, v), weights


def flatten_style_set(style_set):
    """(B, k, n, h, w) -> (B, k*h*w, n): all reference positions as one key sequence."""
    if style_set.ndim != 5:
        raise DimensionError(f"style set must be (B, k, n, h, w), got {style_set.shape}")
    b, k, n, h, w = style_set.shape
    return style_set.transpose(0, 1, 3, 4, 2).reshape(b, k * h * w, n)


class ComponentAttention(Module):
    """Codebook rows query the reference style features (multi-head)."""

    def __init__(self, dim, heads, rng, dtype=np.float32):
        if dim % heads:
            raise DimensionError(f"dimension {dim} not divisible by {heads} heads")
        self.heads = heads
        gain = 1.0
        # column block m of each (n, n) matrix is the per-head projection of head m
        self.w_q = Linear(dim, dim, bias=False, rng=rng, dtype=dtype, gain=gain)
        self.w_k = Linear(dim, dim, bias=False, rng=rng, dtype=dtype, gain=gain)
        self.w_v = Linear(dim, dim, bias=False, rng=rng, dtype=dtype, gain=gain)
        self.w_c = Linear(dim, dim, bias=False, rng=rng, dtype=dtype, gain=gain)

    def forward(self, codebook, style_set, return_weights=False):
        keys = flatten_style_set(style_set)
        if keys.shape[-1] != codebook.shape[-1]:
            raise DimensionError(
                f"component attention: codebook dim {codebook.shape[-1]} != style dim {keys.shape[-1]}"
            )
        q = _split_heads(self.w_q(codebook), self.heads)
        k = _split_heads(self.w_k(keys), self.heads)
        v = _split_heads(self.w_v(keys), self.heads)
        out, weights = attend(q, k, v)
        out = self.w_c(_merge_heads(out))
        return (out, weights) if return_weights else out


class GraphPropagation(Module):
    """Message passing between codes: similarity mixing plus a learned pair score."""

    def __init__(self, dim, rng, dtype=np.float32):
        self.score = Parameter((rng.standard_normal((2 * dim, 1)) / math.sqrt(2 * dim)).astype(dtype))
        self.norm = LayerNorm(dim, dtype=dtype)

    def mixing(self, codes):
        """Row-stochastic similarity matrix softmax(F F^T)."""
        return softmax(matmul(codes, codes.swapaxes(-1, -2)), axis=-1)

    def pair_scores(self, codes):
        """S_ij = [e_i || e_j] W: the 2n -> 1 projection splits into two halves."""
        dim = codes.shape[-1]
        left = matmul(codes, self.score[:dim])
        right = matmul(codes, self.score[dim:])
        return left + right.swapaxes(-1, -2)

    def forward(self, codes):
        mix = self.mixing(codes) + self.pair_scores(codes)
        return self.norm(matmul(mix, codes) + codes)


def stylize_codebook(codebook, refined):
    return codebook + refined


class LocalRefiner(Module):
    """Gated refinement of a set of feature maps, one independent block per group.

    ``x`` is (B, groups * c, H, W). For each group the output is
    sigmoid(first channel) * resize(sigmoid(importance(x))) * x, where the
    importance map comes from softpool -> 3x3 conv -> stride-2 3x3 conv ->
    1x1 conv. Grouped convolutions keep the groups' weights separate.
    """

    def __init__(self, channels, groups=1, window=2, rng=None, dtype=np.float32):
        if channels % groups:
            raise DimensionError(f"{channels} channels not divisible into {groups} groups")
        self.groups = groups
        self.window = window
        conv = dict(rng=rng, dtype=dtype, gain=1.0, groups=groups)
        self.conv = Conv2d(channels, channels, 3, padding=1, **conv)
        self.down = Conv2d(channels, channels, 3, stride=2, padding=1, **conv)
        self.squeeze = Conv2d(channels, channels, 1, **conv)

    def importance(self, x):
        # a singleton axis (e.g. the 1 x d layout of a value matrix) is pooled with window 1
        window = tuple(1 if extent == 1 else self.window for extent in x.shape[-2:])
        y = softpool(x, window)
        for conv in (self.conv, self.down, self.squeeze):
            y = conv(y)
        return y

    def forward(self, x):
        b, c, h, w = x.shape
        gate = bilinear_resize(sigmoid(self.importance(x)), h, w)
        grouped = x.reshape(b, self.groups, c // self.groups, h, w)
        first = sigmoid(grouped[:, :, 0:1])
        return (first * gate.reshape(grouped.shape) * grouped).reshape(b, c, h, w)


class RelationAttention(Module):
    """Content positions query the codes; keys from the codebook, values stylized."""

    def __init__(self, dim, heads, rng, dtype=np.float32):
        if dim % heads:
            raise DimensionError(f"dimension {dim} not divisible by {heads} heads")
        self.heads = heads
        self.w_q = Linear(dim, dim, bias=False, rng=rng, dtype=dtype)
        self.w_k = Linear(dim, dim, bias=False, rng=rng, dtype=dtype)
        self.w_v = Linear(dim, dim, bias=False, rng=rng, dtype=dtype)
        self.w_r = Linear(dim, dim, bias=False, rng=rng, dtype=dtype)
        self.refine_q = LocalRefiner(dim, heads, rng=rng, dtype=dtype)
        self.refine_v = LocalRefiner(dim, heads, rng=rng, dtype=dtype)

    def _refined_heads(self, seq, refiner, h, w):
        """(B, L, n) with L = h*w -> refine each head's (n_m, h, w) map -> (B, heads, L, n_m)."""
        b, length, n = seq.shape
        maps = seq.swapaxes(1, 2).reshape(b, n, h, w)
        maps = refiner(maps)
        return _split_heads(maps.reshape(b, n, length).swapaxes(1, 2), self.heads)

    def forward(self, content, codebook, stylized, return_weights=False):
        b, n, h, w = content.shape
        if codebook.shape[-1] != n or stylized.shape[-1] != n:
            raise DimensionError(
                f"relation attention: content dim {n}, codebook {codebook.shape}, stylized {stylized.shape}"
            )
        if stylized.ndim == 2:
            stylized = stylized.reshape((1,) + stylized.shape) * np.ones((b, 1, 1), dtype=stylized.dtype)
        d = codebook.shape[-2]
        queries = content.reshape(b, n, h * w).swapaxes(1, 2)
        q = self._refined_heads(self.w_q(queries), self.refine_q, h, w)
        v = self._refined_heads(self.w_v(stylized), self.refine_v, 1, d)
        k = _split_heads(self.w_k(codebook), self.heads)
        out, weights = attend(q, k, v)
        fused = self.w_r(_merge_heads(out)) + _merge_heads(q)
        fused = fused.swapaxes(1, 2).reshape(b, n, h, w)
        return (fused, weights) if return_weights else fused


def lookup_codes(table, indices):
    """Gather per-position rows of a (B, d, n) table by (B, h, w) indices -> (B, n, h, w)."""
    b, h, w = indices.shape
    rows = np.arange(b)[:, None]
    gathered = table[rows, indices.reshape(b, h * w)]
    return gathered.swapaxes(1, 2).reshape(b, table.shape[-1], h, w)


class DAHM(Module):
    """Both attention blocks with the ablation toggles.

    * both blocks on: component block -> stylized codebook -> relation block;
    * component block only: each content position takes its code's stylized row;
    * relation block only: values come from the un-stylized codebook;
    * neither: the mean of the reference style maps.
    """

    def __init__(self, dim, heads_component=8, heads_relation=8, enable_component=True,
                 enable_relation=True, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.enable_component = enable_component
        self.enable_relation = enable_relation
        if enable_component:
            self.component = ComponentAttention(dim, heads_component, rng, dtype)
            self.propagation = GraphPropagation(dim, rng, dtype)
        if enable_relation:
            self.relation = RelationAttention(dim, heads_relation, rng, dtype)

    def forward(self, content, codebook, style_set, indices=None):
        """Return ``(f_sa, stylized)``; ``stylized`` is (B, d, n) or None."""
        b = content.shape[0]
        stylized = None
        if self.enable_component:
            refined = self.propagation(self.component(codebook, style_set))
            stylized = stylize_codebook(codebook, refined)
        if self.enable_relation:
            values = stylized if stylized is not None else codebook
            return self.relation(content, codebook, values), stylized
        if stylized is not None:
            if indices is None:
                raise DimensionError("component-only mode needs the content code indices")
            return lookup_codes(stylized, indices), stylized
        if style_set.shape[0] != b:
            raise DimensionError(f"style set batch {style_set.shape[0]} != content batch {b}")
        return style_set.mean(axis=1), None
