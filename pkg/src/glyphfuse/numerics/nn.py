"""Parameter containers and the few layers the models are built from."""
from __future__ import annotations

import numpy as np

from ..errors import DimensionError
from .ops import conv2d, layer_norm, matmul
from .tensor import Tensor


class Parameter(Tensor):
    """A trainable tensor with a checkpoint name (set on registration)."""

    def __init__(self, data, name=None, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name


class Module:
    """Collects parameters from attributes, recursively, in definition order."""

    def named_parameters(self, prefix=""):
        for key, value in vars(self).items():
            if key.startswith("_"):
                continue
            full = prefix + key
            if isinstance(value, Parameter):
                value.name = full
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")
                    elif isinstance(item, Parameter):
                        item.name = f"{full}.{i}"
                        yield item.name, item

    def parameters(self, trainable_only=False):
        return [p for _, p in self.named_parameters() if p.requires_grad or not trainable_only]

    def num_parameters(self, trainable_only=False):
        return int(sum(p.size for p in self.parameters(trainable_only)))

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state, strict=True):
        own = dict(self.named_parameters())
        if strict and set(own) != set(state):
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            raise DimensionError(f"state mismatch: missing {missing[:5]}, unexpected {extra[:5]}")
        for name, arr in state.items():
            if name not in own:
                continue
            p = own[name]
            if p.shape != tuple(arr.shape):
                raise DimensionError(f"{name}: expected shape {p.shape}, got {tuple(arr.shape)}")
            p.data = np.array(arr, dtype=p.dtype)

    def astype(self, dtype):
        """Cast every parameter in place (float32 training, float64 checks)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def requires_grad_(self, flag):
        for p in self.parameters():
            p.requires_grad = flag
        return self

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _normal(rng, shape, std, dtype):
    return (rng.standard_normal(shape) * std).astype(dtype)


class Conv2d(Module):
    def __init__(self, in_ch, out_ch, kernel, stride=1, padding=0, bias=True, rng=None,
                 dtype=np.float32, gain=np.sqrt(2.0), groups=1):
        rng = rng if rng is not None else np.random.default_rng(0)
        if in_ch % groups or out_ch % groups:
            raise DimensionError(f"channels {in_ch}->{out_ch} not divisible into {groups} groups")
        fan_in = in_ch // groups * kernel * kernel
        shape = (out_ch, in_ch // groups, kernel, kernel)
        self.weight = Parameter(_normal(rng, shape, gain / np.sqrt(fan_in), dtype))
        self.bias = Parameter(np.zeros(out_ch, dtype=dtype)) if bias else None
        self.stride = stride
        self.padding = padding
        self.groups = groups

    def forward(self, x):
        return conv2d(x, self.weight, self.bias, self.stride, self.padding, self.groups)


class Linear(Module):
    """``y = x W + b`` with ``W`` stored as (in, out)."""

    def __init__(self, in_dim, out_dim, bias=True, rng=None, dtype=np.float32, gain=1.0):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Parameter(_normal(rng, (in_dim, out_dim), gain / np.sqrt(in_dim), dtype))
        self.bias = Parameter(np.zeros(out_dim, dtype=dtype)) if bias else None

    def forward(self, x):
        y = matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-5, dtype=np.float32):
        self.gamma = Parameter(np.ones(dim, dtype=dtype))
        self.beta = Parameter(np.zeros(dim, dtype=dtype))
        self.eps = eps

    def forward(self, x):
        return layer_norm(x, self.gamma, self.beta, self.eps)


def zero_(module):
    """Set every parameter of ``module`` to zero (used by closed-form checks)."""
    for p in module.parameters():
        p.data[...] = 0
    return module
