"""Glyph feature decomposition: content encoder, vector quantiser, decoder.

The codec is pretrained for reconstruction on canonical-style glyphs and then
frozen; its encoder supplies content features and its codebook the component
codes used by the attention blocks.
"""
from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np

from .errors import DimensionError, TrainingError
from .numerics import (
    Adam,
    Conv2d,
    Module,
    Parameter,
    Tensor,
    bilinear_resize,
    instance_norm,
    leaky_relu,
    no_grad,
    sigmoid,
)
from .numerics.tensor import make

logger = logging.getLogger(__name__)

ALPHA = 1.0  # codebook term
BETA = 0.25  # commitment term


class Encoder(Module):
    """Three stride-2 3x3 convolutions: image -> (n, H/8, W/8)."""

    def __init__(self, channels, embed_dim, rng, dtype=np.float32):
        c1, c2 = channels
        self.convs = [
            Conv2d(1, c1, 3, stride=2, padding=1, rng=rng, dtype=dtype),
            Conv2d(c1, c2, 3, stride=2, padding=1, rng=rng, dtype=dtype),
            Conv2d(c2, embed_dim, 3, stride=2, padding=1, rng=rng, dtype=dtype, gain=1.0),
        ]

    def forward(self, x):
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if i < len(self.convs) - 1:
                x = leaky_relu(x)
        return x


class Decoder(Module):
    """Mirror of :class:`Encoder`: resize x2 then 3x3 conv, three times, then sigmoid.

    Hidden maps are instance-normalised; without it the output sigmoid
    saturates towards a blank background before any strokes are learned.
    """

    def __init__(self, in_ch, channels, rng, dtype=np.float32):
        c1, c2 = channels
        self.convs = [
            Conv2d(in_ch, c2, 3, padding=1, rng=rng, dtype=dtype),
            Conv2d(c2, c1, 3, padding=1, rng=rng, dtype=dtype),
            Conv2d(c1, 1, 3, padding=1, rng=rng, dtype=dtype, gain=1.0),
        ]

    def forward(self, z):
        x = z
        for i, conv in enumerate(self.convs):
            x = bilinear_resize(x, 2 * x.shape[-2], 2 * x.shape[-1])
            x = conv(x)
            if i < len(self.convs) - 1:
                x = leaky_relu(instance_norm(x))
        return sigmoid(x)


class CodecModel(Module):
    def __init__(self, image_size=64, channels=(64, 128), embed_dim=256, codebook_size=100,
                 seed=0, dtype=np.float32):
        rng = np.random.default_rng([seed, 11])
        self.image_size = image_size
        self.encoder = Encoder(channels, embed_dim, rng, dtype)
        self.decoder = Decoder(embed_dim, channels, rng, dtype)
        bound = 1.0 / codebook_size
        self.codebook = Parameter(rng.uniform(-bound, bound, (codebook_size, embed_dim)).astype(dtype))
        self.frozen = False

    @property
    def codebook_size(self):
        return self.codebook.shape[0]

    @property
    def embed_dim(self):
        return self.codebook.shape[1]

    def freeze(self):
        self.requires_grad_(False)
        self.frozen = True
        return self


def as_image_batch(images, dtype):
    """Accept (H, W), (B, H, W) or (B, 1, H, W) arrays/tensors; return a (B, 1, H, W) tensor."""
    if isinstance(images, Tensor):
        return images if images.ndim == 4 else images.reshape((-1, 1) + images.shape[-2:])
    arr = np.asarray(images, dtype=dtype)
    if arr.ndim == 2:
        arr = arr[None, None]
    elif arr.ndim == 3:
        arr = arr[:, None]
    return Tensor(arr)


def encode(model, images):
    """Content features Z_c of shape (B, n, H/8, W/8)."""
    x = as_image_batch(images, model.codebook.dtype)
    if x.shape[-2:] != (model.image_size, model.image_size) or x.shape[1] != 1:
        raise DimensionError(
            f"encode: expected images of size {model.image_size}x{model.image_size}, got {x.shape}"
        )
    return model.encoder(x)


def nearest_codes(vectors, codes, chunk=4096):
    """Index of the nearest code (squared L2) for each row; ties go to the lowest index."""
    vectors = np.asarray(vectors)
    codes = np.asarray(codes)
    out = np.empty(len(vectors), dtype=np.intp)
    for start in range(0, len(vectors), chunk):
        block = vectors[start : start + chunk]
        diff = block[:, None, :] - codes[None, :, :]
        out[start : start + chunk] = np.argmin((diff * diff).sum(-1), axis=1)
    return out


def quantize(z_c, codebook, straight_through=True):
    """Replace each spatial vector of ``z_c`` (B, n, h, w) with its nearest code.

    Returns ``(z_q, indices)`` with indices of shape (B, h, w). With
    ``straight_through`` the result carries the gradient of ``z_c`` unchanged;
    otherwise it is the codebook lookup, differentiable w.r.t. the codebook.
    """
    if z_c.shape[1] != codebook.shape[1]:
        raise DimensionError(
            f"quantize: feature channels {z_c.shape[1]} != code dimension {codebook.shape[1]}"
        )
    b, n, h, w = z_c.shape
    flat = z_c.data.transpose(0, 2, 3, 1).reshape(-1, n)
    idx = nearest_codes(flat, codebook.data)
    lookup = codebook[idx].reshape(b, h, w, n).transpose(0, 3, 1, 2)
    indices = idx.reshape(b, h, w)
    if straight_through:
        return straight_through_value(z_c, lookup), indices
    return lookup, indices


def straight_through_value(z_c, lookup):
    """Forward value exactly ``lookup``; backward treats the step as identity in ``z_c``."""
    return make(np.array(lookup.data), (z_c,), lambda g: (g,))


def decode(model, z_q):
    if z_q.ndim != 4 or z_q.shape[1] != model.embed_dim:
        raise DimensionError(f"decode: expected (B, {model.embed_dim}, h, w), got {z_q.shape}")
    return model.decoder(z_q)


def latent_losses(z_c, z_q):
    """Codebook and commitment terms, each a mean over positions of a squared L2 norm."""
    codebook_term = ((z_c.detach() - z_q) ** 2).sum(axis=1).mean()
    commit_term = ((z_c - z_q.detach()) ** 2).sum(axis=1).mean()
    return codebook_term, commit_term


def pretrain_loss(i_f, i_r, z_c, z_q, alpha=ALPHA, beta=BETA):
    """Reconstruction L1 plus stop-gradient latent terms.

    ``z_q`` must be the codebook lookup (not the straight-through value) so
    the codebook term reaches the codebook.
    """
    if i_f.shape != i_r.shape or z_c.shape != z_q.shape:
        raise DimensionError(f"pretrain_loss: shapes {i_f.shape}/{i_r.shape}, {z_c.shape}/{z_q.shape}")
    rec = (i_f - i_r).abs().mean()
    codebook_term, commit_term = latent_losses(z_c, z_q)
    return rec + alpha * codebook_term + beta * commit_term


def codebook_usage(model, images, batch=64):
    """Distinct code indices used when quantising ``images``."""
    used = set()
    with no_grad():
        for start in range(0, len(images), batch):
            z = encode(model, images[start : start + batch])
            _, idx = quantize(z, model.codebook)
            used.update(np.unique(idx).tolist())
    return len(used)


def run_pretraining(config, images, out_dir=None, log_every=100):
    """Train a :class:`CodecModel` on ``images`` (N, H, W) and freeze it.

    Returns ``(model, history)`` where history rows are
    ``(iteration, L_rec, L_lat)``; the CSV is written under ``out_dir``.
    """
    images = np.asarray(images, dtype=np.float32)
    model = CodecModel(config.image_size, config.enc_channels, config.embed_dim,
                       config.codebook_size, seed=config.seed)
    rng = np.random.default_rng([config.seed, 13])
    # seed the codebook with encoder outputs so codes start on the data manifold
    with no_grad():
        sample = images[rng.choice(len(images), size=min(len(images), 64), replace=False)]
        z = encode(model, sample).data.transpose(0, 2, 3, 1).reshape(-1, model.embed_dim)
        picks = rng.choice(len(z), size=model.codebook_size, replace=len(z) < model.codebook_size)
        noise = rng.normal(0.0, 1e-3, (model.codebook_size, model.embed_dim))
        model.codebook.data = (z[picks] + noise).astype(model.codebook.dtype)
    opt = Adam(model.parameters(), lr=config.pretrain_lr, betas=(0.9, 0.999))
    history = []
    for it in range(config.pretrain_iters):
        batch = images[rng.integers(0, len(images), size=config.pretrain_batch)]
        x = Tensor(batch[:, None])
        z_c = encode(model, x)
        lookup, _ = quantize(z_c, model.codebook, straight_through=False)
        z_st = straight_through_value(z_c, lookup)
        recon = decode(model, z_st)
        rec = (x - recon).abs().mean()
        codebook_term, commit_term = latent_losses(z_c, lookup)
        lat = ALPHA * codebook_term + BETA * commit_term
        loss = rec + lat
        if not np.isfinite(loss.data):
            raise TrainingError(f"codec pretraining diverged at iteration {it}", iteration=it,
                                term="L_pre")
        opt.zero_grad()
        loss.backward()
        opt.step()
        history.append((it, float(rec.data), float(lat.data)))
        if log_every and it % log_every == 0:
            logger.info("pretrain %d: L_rec=%.4f L_lat=%.4f", it, rec.data, lat.data)
    model.freeze()
    if out_dir is not None:
        write_history(Path(out_dir) / "codec_losses.csv", ("iteration", "L_rec", "L_lat"), history)
    return model, history


def write_history(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
