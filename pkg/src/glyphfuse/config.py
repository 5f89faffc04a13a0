"""Run configuration shared by the codec, generator and training harness."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigurationError


@dataclass(frozen=True)
class LossWeights:
    adv: float = 1.0
    img: float = 1.0
    feat: float = 1.0
    cst: float = 0.1
    cor: float = 0.5
    ela: float = 0.5

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigurationError(f"loss weight {f.name} must be non-negative")


@dataclass(frozen=True)
class TrainConfig:
    # corpus (full scale: 575 fonts x 3500 characters at 128 px)
    num_styles: int = 10
    num_contents: int = 60
    corpus_seed: int = 7
    image_size: int = 64
    # architecture
    enc_channels: tuple = (64, 128)
    embed_dim: int = 256
    codebook_size: int = 100
    heads_component: int = 8
    heads_relation: int = 8
    disc_channels: tuple = (64, 128, 256, 512)
    enable_component_block: bool = True
    enable_relation_block: bool = True
    # sampling
    k: int = 4
    batch_size: int = 8
    # stage 1 (full scale: batch 64, 50000 iterations)
    pretrain_iters: int = 2000
    pretrain_batch: int = 16
    pretrain_lr: float = 1e-3
    # stage 2 (full scale: 600000 iterations)
    main_iters: int = 5000
    lr_g: float = 2e-4
    lr_d: float = 4e-4
    beta1: float = 0.5
    beta2: float = 0.999
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    checkpoint_every: int = 1000
    sample_every: int = 1000

    def __post_init__(self):
        positive = ["num_styles", "num_contents", "image_size", "embed_dim", "codebook_size",
                    "heads_component", "heads_relation", "k", "batch_size", "pretrain_batch",
                    "lr_g", "lr_d", "pretrain_lr"]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.pretrain_iters < 0 or self.main_iters < 0:
            raise ConfigurationError("iteration counts must be non-negative")
        if self.image_size % 8:
            raise ConfigurationError(f"image_size must be divisible by 8, got {self.image_size}")
        for heads in (self.heads_component, self.heads_relation):
            if self.embed_dim % heads:
                raise ConfigurationError(
                    f"embed_dim {self.embed_dim} not divisible by {heads} attention heads"
                )
        if isinstance(self.weights, dict):
            object.__setattr__(self, "weights", LossWeights(**self.weights))
        object.__setattr__(self, "enc_channels", tuple(self.enc_channels))
        object.__setattr__(self, "disc_channels", tuple(self.disc_channels))

    @property
    def latent_size(self):
        return self.image_size // 8

    def with_(self, **changes):
        if "weights" in changes and isinstance(changes["weights"], dict):
            changes["weights"] = replace(self.weights, **changes["weights"])
        return replace(self, **changes)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path):
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def toy(cls, **changes):
        """Desk-scale setting for one CPU core (tens of minutes per run).

        The adversarial term is down-weighted: with 400 training pairs and a
        full-strength critic the generator collapses to a single output.
        """
        base = cls(
            image_size=64,
            enc_channels=(16, 32),
            embed_dim=32,
            disc_channels=(16, 32, 48, 64),
            pretrain_iters=2000,
            pretrain_batch=16,
            main_iters=5000,
            checkpoint_every=2500,
            sample_every=2500,
            weights=LossWeights(adv=0.1),
        )
        return base.with_(**changes)
