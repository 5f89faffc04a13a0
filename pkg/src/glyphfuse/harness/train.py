"""Two-stage training: codec pretraining, then adversarial generator training.

A run directory holds::

    config.json  corpus.json  losses.csv  codec_losses.csv
    checkpoints/<tag>/{codec,generator,discriminator}.{bin,json}, state.json
    samples/iter_XXXXXX.png
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..adversary import DiscriminatorModel, d_loss, discriminate, g_adv_loss
from ..codec import CodecModel, run_pretraining
from ..config import TrainConfig
from ..errors import ConfigurationError, TrainingError
from ..generator import GeneratorModel, forward
from ..glyphdata import Corpus, build_corpus, sample_batch, save_png
from ..losses import (
    LossParts,
    batch_style_contrast,
    corner_consistency,
    corner_surrogate,
    detect_corners,
    elastic_loss,
    matching_losses,
    total_objective,
)
from ..numerics import Adam, Tensor, load_module, no_grad, save_module

logger = logging.getLogger(__name__)

LOSS_COLUMNS = ("iteration", "L_D", "L_adv", "L_img", "L_feat", "L_cst", "L_cor", "L_ela", "L_G",
                "corner_metric")


@dataclass
class TrainState:
    config: TrainConfig
    corpus: Corpus
    codec: CodecModel
    generator: GeneratorModel
    discriminator: DiscriminatorModel
    iteration: int = 0
    history: list = field(default_factory=list)


def corpus_for(config):
    return build_corpus(config.num_styles, config.num_contents, config.corpus_seed,
                        size=config.image_size)


def pretrain_codec(config, corpus, out_dir=None):
    """Pretrain the codec on the canonical renders of every corpus content."""
    images = np.stack([corpus.render(c) for c in range(corpus.num_contents)])
    codec, _ = run_pretraining(config, images, out_dir=out_dir)
    return codec


def build_models(config, corpus, codec):
    generator = GeneratorModel(codec, config)
    discriminator = DiscriminatorModel(corpus.num_styles, corpus.num_contents,
                                       config.disc_channels, seed=config.seed)
    return generator, discriminator


def _batch_corner_metric(targets, outputs):
    diag = float(np.hypot(*targets.shape[-2:]))
    values = [corner_consistency(detect_corners(t[0]), detect_corners(o[0]), diagonal=diag)
              for t, o in zip(targets, outputs)]
    return float(np.mean(values))


def _finite(value, name, iteration):
    v = float(value.data) if isinstance(value, Tensor) else float(value)
    if not np.isfinite(v):
        raise TrainingError(f"non-finite {name} at iteration {iteration}", iteration=iteration,
                            term=name)
    return v


def train_step(state, opt_g, opt_d, batch, weights, with_corner_metric=True):
    """One discriminator update followed by one generator update; returns the loss row.

    The generator runs once: the discriminator sees its output detached, and
    the generator step reuses the same graph (its weights have not changed).
    """
    it = state.iteration
    G, D = state.generator, state.discriminator
    dtype = G.codec.codebook.dtype
    target = Tensor(batch.target.astype(dtype))
    out = forward(G, batch.content.astype(dtype), batch.refs.astype(dtype))

    # discriminator
    real_scores, _ = discriminate(D, target, batch.style, batch.content_label)
    fake_scores, _ = discriminate(D, out.image.detach(), batch.style, batch.content_label)
    loss_d = d_loss(real_scores, fake_scores)
    _finite(loss_d, "L_D", it)
    opt_d.zero_grad()
    loss_d.backward()
    opt_d.step()

    # generator
    fake_scores, feats_fake = discriminate(D, out.image, batch.style, batch.content_label)
    with no_grad():
        _, feats_real = discriminate(D, target, batch.style, batch.content_label)
    l_img, l_feat = matching_losses(target, out.image, feats_real, feats_fake)
    l_cst = (batch_style_contrast(out.stylized, batch.style, batch.content_label)
             if out.stylized is not None else 0.0)
    l_cor = corner_surrogate(target, out.image) if weights.cor > 0 else 0.0
    l_ela = elastic_loss(target, out.image) if weights.ela > 0 else 0.0
    parts = LossParts(adv_g=g_adv_loss(fake_scores), img=l_img, feat=l_feat, cst=l_cst,
                      cor=l_cor, ela=l_ela, adv_d=loss_d)
    total_g, _ = total_objective(parts, weights)
    values = {
        "L_D": _finite(loss_d, "L_D", it),
        "L_adv": _finite(parts.adv_g, "L_adv", it),
        "L_img": _finite(l_img, "L_img", it),
        "L_feat": _finite(l_feat, "L_feat", it),
        "L_cst": _finite(l_cst, "L_cst", it),
        "L_cor": _finite(l_cor, "L_cor", it),
        "L_ela": _finite(l_ela, "L_ela", it),
        "L_G": _finite(total_g, "L_G", it),
    }
    opt_g.zero_grad()
    total_g.backward()
    D.zero_grad()
    opt_g.step()
    values["corner_metric"] = (_batch_corner_metric(batch.target, out.image.data)
                               if with_corner_metric else float("nan"))
    return (it,) + tuple(values[c] for c in LOSS_COLUMNS[1:]), out.image.data


def run_train(config, out_dir=None, codec=None, corpus=None, log_every=100, corner_every=50):
    """Train the generator and discriminator; returns the final :class:`TrainState`.

    ``codec`` is pretrained (and frozen) here unless one is passed in.
    """
    corpus = corpus if corpus is not None else corpus_for(config)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        config.save(out / "config.json")
        (out / "corpus.json").write_text(json.dumps(corpus.manifest()), encoding="utf-8")
    if codec is None:
        codec = pretrain_codec(config, corpus, out)
    if codec.image_size != config.image_size or codec.embed_dim != config.embed_dim:
        raise ConfigurationError("codec does not match the configured image size / embed dim")
    generator, discriminator = build_models(config, corpus, codec)
    state = TrainState(config, corpus, codec, generator, discriminator)
    betas = (config.beta1, config.beta2)
    opt_g = Adam(generator.parameters(), config.lr_g, betas)
    opt_d = Adam(discriminator.parameters(), config.lr_d, betas)
    rng = np.random.default_rng([config.seed, 29])
    for it in range(config.main_iters):
        state.iteration = it
        batch = sample_batch(corpus, config.batch_size, config.k, rng)
        metric = bool(corner_every) and it % corner_every == 0
        row, images = train_step(state, opt_g, opt_d, batch, config.weights, metric)
        state.history.append(row)
        if log_every and it % log_every == 0:
            logger.info("iter %d: L_D=%.4f L_img=%.4f L_G=%.4f", it, row[1], row[3], row[8])
        done = it + 1
        if out is not None and config.sample_every and done % config.sample_every == 0:
            save_sample_grid(out / "samples" / f"iter_{done:06d}.png", batch, images)
        if out is not None and config.checkpoint_every and done % config.checkpoint_every == 0:
            save_checkpoint(state, out / "checkpoints" / f"iter_{done:06d}")
    state.iteration = config.main_iters
    if out is not None:
        write_losses(out / "losses.csv", state.history)
        save_checkpoint(state, out / "checkpoints" / "final")
    return state


def write_losses(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOSS_COLUMNS)
        for row in rows:
            writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def save_sample_grid(path, batch, images):
    """Rows of content | first reference | output | target."""
    tiles = []
    for i in range(len(batch)):
        tiles.append(np.concatenate([batch.content[i, 0], batch.refs[i, 0, 0], images[i, 0],
                                     batch.target[i, 0]], axis=1))
    save_png(path, np.concatenate(tiles, axis=0))


def save_checkpoint(state, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_module(directory / "codec", state.codec)
    save_module(directory / "generator", state.generator)
    save_module(directory / "discriminator", state.discriminator)
    state.config.save(directory / "config.json")
    (directory / "corpus.json").write_text(json.dumps(state.corpus.manifest()), encoding="utf-8")
    (directory / "state.json").write_text(json.dumps({"iteration": state.iteration}), encoding="utf-8")
    return directory


def load_checkpoint(directory):
    """Rebuild a :class:`TrainState` (without loss history) from a checkpoint directory."""
    directory = Path(directory)
    if not (directory / "state.json").exists():
        raise ConfigurationError(f"{directory} is not a checkpoint directory")
    config = TrainConfig.load(directory / "config.json")
    corpus = Corpus.from_manifest(json.loads((directory / "corpus.json").read_text(encoding="utf-8")))
    codec = CodecModel(config.image_size, config.enc_channels, config.embed_dim,
                       config.codebook_size, seed=config.seed)
    load_module(directory / "codec", codec)
    codec.freeze()
    generator, discriminator = build_models(config, corpus, codec)
    load_module(directory / "generator", generator)
    load_module(directory / "discriminator", discriminator)
    iteration = json.loads((directory / "state.json").read_text(encoding="utf-8"))["iteration"]
    return TrainState(config, corpus, codec, generator, discriminator, iteration)
