"""Generator assembly: reference encoder, content alignment, attention, decoder.

The frozen codec provides the content features of the target character and
the component codebook. A trainable reference encoder turns the k style
references into style maps; the attention module fuses them with the content
features; an alignment step weights the references by how much their content
resembles the target; a fresh decoder renders the concatenation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import Decoder, Encoder, encode, quantize
from .dahm import DAHM
from .errors import ArgumentError, DimensionError
from .numerics import Module, Tensor, concat, no_grad, softmax


class GeneratorModel(Module):
    def __init__(self, codec, config, seed=None):
        seed = config.seed if seed is None else seed
        rng = np.random.default_rng([seed, 17])
        dtype = codec.codebook.dtype
        n = codec.embed_dim
        self._codec = codec.freeze()
        self.image_size = codec.image_size
        self.ref_encoder = Encoder(config.enc_channels, n, rng, dtype)
        self.dahm = DAHM(n, config.heads_component, config.heads_relation,
                         config.enable_component_block, config.enable_relation_block, rng, dtype)
        self.decoder = Decoder(3 * n, config.enc_channels, rng, dtype)

    @property
    def codec(self):
        """The frozen codec; kept out of the parameter list on purpose."""
        return self._codec


def _as_refs(refs, dtype):
    """Accept (k, H, W), (B, k, H, W) or (B, k, 1, H, W); return a (B, k, 1, H, W) tensor."""
    if isinstance(refs, Tensor):
        arr = refs
    else:
        arr = Tensor(np.asarray(refs, dtype=dtype))
    if arr.ndim == 3:
        arr = arr.reshape((1,) + arr.shape[:1] + (1,) + arr.shape[1:])
    elif arr.ndim == 4:
        arr = arr.reshape(arr.shape[:2] + (1,) + arr.shape[2:])
    if arr.ndim != 5 or arr.shape[2] != 1:
        raise DimensionError(f"references must be (B, k, 1, H, W), got {arr.shape}")
    if arr.shape[1] == 0:
        raise ArgumentError("reference set is empty")
    return arr


def encode_references(model, refs):
    """Style maps (B, k, n, h, w) from the trainable reference encoder."""
    refs = _as_refs(refs, model.codec.codebook.dtype)
    b, k = refs.shape[:2]
    if refs.shape[-2:] != (model.image_size, model.image_size):
        raise DimensionError(f"references must be {model.image_size} px, got {refs.shape[-2:]}")
    maps = model.ref_encoder(refs.reshape((b * k,) + refs.shape[2:]))
    return maps.reshape((b, k) + maps.shape[1:])


def content_similarity(ref_content, content):
    """Cosine similarity per channel between each reference's and the target's content map.

    ``ref_content`` is (B, k, n, h, w) and ``content`` (B, n, h, w); the
    result is (B, k, n). Channels with a zero vector on either side give 0.
    """
    if ref_content.shape[2] != content.shape[1] or ref_content.shape[3:] != content.shape[2:]:
        raise DimensionError(
            f"content_similarity: reference features {ref_content.shape} vs content {content.shape}"
        )
    target = content.reshape(content.shape[:2] + (1,) + content.shape[2:]).swapaxes(1, 2)
    dot = (ref_content * target).sum(axis=(-2, -1))
    norms = np.sqrt((ref_content.data**2).sum(axis=(-2, -1)) * (target.data**2).sum(axis=(-2, -1)))
    valid = norms > 0
    safe = np.where(valid, norms, 1.0).astype(dot.dtype)
    return dot * (valid / safe)


def align_content(similarity, style_set):
    """Weight the reference style maps channel by channel with softmax(similarity) over k."""
    if similarity.shape != style_set.shape[:3]:
        raise DimensionError(f"align_content: weights {similarity.shape} vs style set {style_set.shape}")
    weights = softmax(similarity, axis=1)
    weights = weights.reshape(weights.shape + (1, 1))
    return (weights * style_set).sum(axis=1)


@dataclass
class GeneratorOutput:
    image: Tensor
    stylized: Tensor | None  # (B, d, n) stylized codebook, None when the component block is off
    content_codes: np.ndarray


def forward(model, content, refs):
    """Full pass returning the image plus intermediates the losses need."""
    codec = model.codec
    refs = _as_refs(refs, codec.codebook.dtype)
    b, k = refs.shape[:2]
    with no_grad():
        f_c = encode(codec, content)
        _, indices = quantize(f_c, codec.codebook)
        ref_content = encode(codec, refs.reshape((b * k,) + refs.shape[2:]).detach())
        ref_content = ref_content.reshape((b, k) + ref_content.shape[1:])
    if f_c.shape[0] != b:
        raise DimensionError(f"{f_c.shape[0]} content images but {b} reference sets")
    style_set = encode_references(model, refs)
    f_sa, stylized = model.dahm(f_c, codec.codebook, style_set, indices)
    f_ca = align_content(content_similarity(ref_content, f_c), style_set)
    image = model.decoder(concat([f_c, f_sa, f_ca], axis=1))
    return GeneratorOutput(image, stylized, indices)


def generate(model, content, refs):
    """Generated glyphs (B, 1, H, W) for content images and their reference sets."""
    return forward(model, content, refs).image
