"""Conditional discriminator and hinge adversarial losses.

The discriminator is a projection discriminator: a strided conv trunk,
sum-pooled features, an unconditional linear head, and inner products with a
learned embedding of the style label and of the content label.
"""
from __future__ import annotations

import numpy as np

from .errors import UnknownIdError
from .numerics import Conv2d, Linear, Module, Parameter, leaky_relu, relu


class DiscriminatorModel(Module):
    def __init__(self, num_styles, num_contents, channels=(64, 128, 256, 512), seed=0,
                 dtype=np.float32):
        rng = np.random.default_rng([seed, 23])
        chans = (1,) + tuple(channels)
        self.trunk = [
            Conv2d(chans[i], chans[i + 1], 3, stride=2, padding=1, rng=rng, dtype=dtype)
            for i in range(len(channels))
        ]
        width = chans[-1]
        self.head = Linear(width, 1, rng=rng, dtype=dtype)
        scale = 1.0 / np.sqrt(width)
        self.style_embed = Parameter((rng.standard_normal((num_styles, width)) * scale).astype(dtype))
        self.content_embed = Parameter((rng.standard_normal((num_contents, width)) * scale).astype(dtype))

    @property
    def num_layers(self):
        return len(self.trunk)


def _check_labels(labels, size, kind):
    labels = np.asarray(labels, dtype=np.intp).reshape(-1)
    if labels.size and (labels.min() < 0 or labels.max() >= size):
        raise UnknownIdError(f"{kind} label out of range [0, {size}): {labels.tolist()}")
    return labels


def discriminate(model, image, style_label, content_label):
    """Return ``(scores (B,), features)`` with one feature map per trunk layer."""
    styles = _check_labels(style_label, model.style_embed.shape[0], "style")
    contents = _check_labels(content_label, model.content_embed.shape[0], "content")
    features = []
    h = image
    for conv in model.trunk:
        h = leaky_relu(conv(h))
        features.append(h)
    pooled = h.sum(axis=(2, 3))
    score = model.head(pooled).reshape(-1)
    score = score + (model.style_embed[styles] * pooled).sum(axis=1)
    score = score + (model.content_embed[contents] * pooled).sum(axis=1)
    return score, features


def d_loss(real_scores, fake_scores):
    """Hinge loss for the discriminator: E[max(0, 1 - real)] + E[max(0, 1 + fake)]."""
    return relu(1.0 - real_scores).mean() + relu(1.0 + fake_scores).mean()


def g_adv_loss(fake_scores):
    return -fake_scores.mean()
