"""Training losses for the generator.

Besides the usual image/feature matching terms this module has three
structure-aware terms:

* a contrastive term on stylized codebooks (same style pulls together,
  same content with another style pushes apart);
* corner consistency: Shi-Tomasi corners of target and output matched by
  bidirectional nearest neighbours. The discrete version is a metric; a
  smooth response-map surrogate carries the training gradient;
* an elastic-mesh term comparing patches sampled around ink-adaptive
  control points.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, fields

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import cdist

from .config import LossWeights
from .errors import ConfigurationError, DimensionError
from .numerics import Tensor, concat, conv2d, logsumexp, relu, sample_bilinear, stack

MESH_GRID = 8
PATCH_SIZE = 9


# ---------------------------------------------------------------- matching
def matching_losses(target, output, feats_target, feats_output):
    """Mean absolute pixel error and summed per-layer mean absolute feature error.

    Target-side features are treated as constants.
    """
    if len(feats_target) != len(feats_output):
        raise DimensionError(
            f"feature lists differ in length: {len(feats_target)} vs {len(feats_output)}"
        )
    target = target if isinstance(target, Tensor) else Tensor(np.asarray(target, dtype=output.dtype))
    l_img = (output - target.detach()).abs().mean()
    l_feat = output.sum() * 0.0
    for ft, fo in zip(feats_target, feats_output):
        ft = ft.detach() if isinstance(ft, Tensor) else Tensor(np.asarray(ft, dtype=fo.dtype))
        l_feat = l_feat + (fo - ft).abs().mean()
    return l_img, l_feat


# ---------------------------------------------------------- style contrast
def _unit_rows(codes, eps=1e-12):
    return codes / ((codes * codes).sum(axis=-1, keepdims=True) + eps).sqrt()


def _code_similarity(a, b):
    """Mean over codes of the cosine similarity of matching rows; lies in [-1, 1]."""
    return (_unit_rows(a) * _unit_rows(b)).sum(axis=-1).mean(axis=-1)


def style_contrast(anchor, positive, negatives):
    """InfoNCE-style loss on (d, n) stylized codebooks with cosine similarities."""
    if not negatives:
        warnings.warn("style_contrast called without negatives; returning 0", RuntimeWarning,
                      stacklevel=2)
        return anchor.sum() * 0.0
    sims = [_code_similarity(anchor, positive)] + [_code_similarity(anchor, neg) for neg in negatives]
    sims = stack(sims, axis=0)
    return logsumexp(sims, axis=0) - sims[0]


def batch_style_contrast(stylized, styles, contents):
    """Average :func:`style_contrast` over a batch of (B, d, n) stylized codebooks.

    For each anchor the positive is another item of the same style with a
    different content, the negatives are items with the same content and a
    different style. Anchors lacking a positive or any negative are skipped;
    returns 0 if no anchor qualifies.
    """
    styles = np.asarray(styles)
    contents = np.asarray(contents)
    terms = []
    for i in range(len(styles)):
        pos = np.flatnonzero((styles == styles[i]) & (contents != contents[i]))
        neg = np.flatnonzero((styles != styles[i]) & (contents == contents[i]))
        if len(pos) == 0 or len(neg) == 0:
            continue
        terms.append(style_contrast(stylized[i], stylized[int(pos[0])],
                                    [stylized[int(j)] for j in neg]))
    if not terms:
        return stylized.sum() * 0.0
    return stack(terms, axis=0).mean()


# ---------------------------------------------------------------- corners
@dataclass
class CornerSet:
    points: np.ndarray  # (N, 2) row, col in pixels
    response: np.ndarray  # (N,) Shi-Tomasi scores

    def __len__(self):
        return len(self.points)

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 2)), np.zeros(0))


def min_eigen_response(image, window=5):
    """Per-pixel smaller eigenvalue of the box-averaged gradient structure tensor."""
    img = np.asarray(image, dtype=np.float64)
    gy = ndimage.sobel(img, axis=0, mode="nearest")
    gx = ndimage.sobel(img, axis=1, mode="nearest")
    a = ndimage.uniform_filter(gx * gx, window, mode="constant")
    b = ndimage.uniform_filter(gx * gy, window, mode="constant")
    c = ndimage.uniform_filter(gy * gy, window, mode="constant")
    root = np.sqrt((a - c) ** 2 + 4.0 * b * b)
    return np.maximum(0.5 * (a + c - root), 0.0)


def detect_corners(image, max_corners=64, quality=0.01, min_distance=3, window=5):
    """Shi-Tomasi corners: threshold, 3x3 local maxima, greedy spacing, top-N by score."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        img = img.reshape(img.shape[-2:])
    score = min_eigen_response(img, window)
    peak = score.max()
    if peak <= 1e-12:
        return CornerSet.empty()
    local_max = score == ndimage.maximum_filter(score, size=3, mode="constant")
    rows, cols = np.nonzero(local_max & (score >= quality * peak))
    values = score[rows, cols]
    order = np.lexsort((cols, rows, -values))  # strongest first, ties by position
    kept = []
    for idx in order:
        p = (rows[idx], cols[idx])
        if all((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 >= min_distance**2 for q, _ in kept):
            kept.append((p, values[idx]))
            if len(kept) == max_corners:
                break
    if not kept:
        return CornerSet.empty()
    points = np.array([p for p, _ in kept], dtype=np.float64)
    return CornerSet(points, np.array([v for _, v in kept]))


def _points(c):
    pts = c.points if isinstance(c, CornerSet) else c
    return np.asarray(pts, dtype=np.float64).reshape(-1, 2)


def corner_consistency(c_t, c_o, diagonal=64 * math.sqrt(2.0)):
    """Bidirectional nearest-neighbour distance between two corner sets.

    Both empty gives 0; exactly one empty gives ``diagonal`` (the image
    diagonal), so a blank output is never rewarded.
    """
    a, b = _points(c_t), _points(c_o)
    if len(a) == 0 and len(b) == 0:
        return 0.0
    if len(a) == 0 or len(b) == 0:
        return float(diagonal)
    dist = cdist(a, b)
    return float((dist.min(axis=1).sum() + dist.min(axis=0).sum()) / (len(a) + len(b)))


_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])


def _response_map(images, window=5):
    """Differentiable min-eigenvalue map of (B, 1, H, W) images, scaled by its max."""
    dtype = images.dtype
    kernels = Tensor(np.stack([_SOBEL_X, _SOBEL_X.T])[:, None].astype(dtype))
    grads = conv2d(images, kernels, padding=1)
    gx, gy = grads[:, 0:1], grads[:, 1:2]
    box = Tensor(np.full((3, 1, window, window), 1.0 / window**2, dtype=dtype))
    tensor = conv2d(concat([gx * gx, gx * gy, gy * gy], axis=1), box, padding=window // 2, groups=3)
    a, b, c = tensor[:, 0:1], tensor[:, 1:2], tensor[:, 2:3]
    root = ((a - c) ** 2 + 4.0 * b * b + 1e-12).sqrt()
    lam = relu((a + c - root) * 0.5)
    peak = lam.reshape(lam.shape[0], -1).max(axis=1).reshape(-1, 1, 1, 1)
    return lam / (peak + 1e-8)


def corner_surrogate(target, output, window=5):
    """Mean squared difference of the two images' normalised corner-response maps."""
    target = target if isinstance(target, Tensor) else Tensor(np.asarray(target, dtype=output.dtype))
    if target.shape != output.shape:
        raise DimensionError(f"corner_surrogate: shapes {target.shape} vs {output.shape}")
    diff = _response_map(output, window) - _response_map(target.detach(), window)
    return (diff * diff).mean()


# ---------------------------------------------------------------- elastic mesh
def build_mesh(images, grid=MESH_GRID):
    """Control points (B, grid*grid, 2): cell centres shifted to the cell's ink centroid."""
    imgs = np.asarray(images.data if isinstance(images, Tensor) else images, dtype=np.float64)
    imgs = imgs.reshape((-1,) + imgs.shape[-2:])
    b, h, w = imgs.shape
    re = np.linspace(0, h, grid + 1).round().astype(int)
    ce = np.linspace(0, w, grid + 1).round().astype(int)
    mesh = np.zeros((b, grid * grid, 2))
    for i in range(grid):
        for j in range(grid):
            r0, r1, c0, c1 = re[i], re[i + 1], ce[j], ce[j + 1]
            cell = imgs[:, r0:r1, c0:c1]
            mass = cell.sum(axis=(1, 2))
            rr, cc = np.meshgrid(np.arange(r0, r1), np.arange(c0, c1), indexing="ij")
            safe = np.where(mass > 0, mass, 1.0)
            row = np.where(mass > 0, (cell * rr).sum(axis=(1, 2)) / safe, (r0 + r1 - 1) / 2)
            col = np.where(mass > 0, (cell * cc).sum(axis=(1, 2)) / safe, (c0 + c1 - 1) / 2)
            mesh[:, i * grid + j, 0] = np.clip(row, r0, r1 - 1)
            mesh[:, i * grid + j, 1] = np.clip(col, c0, c1 - 1)
    return mesh


def elastic_features(images, mesh, patch=PATCH_SIZE):
    """Concatenated P x P bilinear patches around each control point: (B, G*G*P*P)."""
    if images.shape[-1] < patch or images.shape[-2] < patch:
        raise DimensionError(f"image {images.shape[-2:]} smaller than the {patch}x{patch} patch")
    if images.ndim == 2:
        images = images.reshape((1, 1) + images.shape)
    elif images.ndim == 3:
        images = images.reshape((images.shape[0], 1) + images.shape[1:])
    offsets = np.arange(patch) - (patch - 1) / 2.0
    dr, dc = np.meshgrid(offsets, offsets, indexing="ij")
    rows = (mesh[:, :, 0, None] + dr.reshape(1, 1, -1)).reshape(mesh.shape[0], -1)
    cols = (mesh[:, :, 1, None] + dc.reshape(1, 1, -1)).reshape(mesh.shape[0], -1)
    samples = sample_bilinear(images, rows, cols)
    return samples.reshape(samples.shape[0], -1)


def elastic_loss(target, output, grid=MESH_GRID, patch=PATCH_SIZE):
    """Mean squared difference of elastic features, mesh taken from the target."""
    target = target if isinstance(target, Tensor) else Tensor(np.asarray(target, dtype=output.dtype))
    if target.shape != output.shape:
        raise DimensionError(f"elastic_loss: shapes {target.shape} vs {output.shape}")
    mesh = build_mesh(target, grid)
    diff = elastic_features(output, mesh, patch) - elastic_features(target.detach(), mesh, patch)
    return (diff * diff).mean()


# ---------------------------------------------------------------- objective
@dataclass
class LossParts:
    adv_g: object = 0.0
    img: object = 0.0
    feat: object = 0.0
    cst: object = 0.0
    cor: object = 0.0
    ela: object = 0.0
    adv_d: object = 0.0


def total_objective(parts, weights=None):
    """Weighted generator objective and the discriminator objective."""
    weights = weights if weights is not None else LossWeights()
    if isinstance(weights, dict):
        weights = LossWeights(**weights)
    for f in fields(weights):
        if getattr(weights, f.name) < 0:
            raise ConfigurationError(f"loss weight {f.name} must be non-negative")
    if isinstance(parts, dict):
        parts = LossParts(**parts)
    elif isinstance(parts, (tuple, list)):
        parts = LossParts(*parts)
    gen = (weights.adv * parts.adv_g + weights.img * parts.img + weights.feat * parts.feat
           + weights.cst * parts.cst + weights.cor * parts.cor + weights.ela * parts.ela)
    return gen, parts.adv_d
