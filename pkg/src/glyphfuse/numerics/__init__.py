"""Minimal differentiable tensor substrate."""
from .checkpoint import load_arrays, load_module, save_arrays, save_module
from .gradcheck import grad_check
from .nn import Conv2d, LayerNorm, Linear, Module, Parameter, zero_
from .ops import (
    bilinear_resize,
    conv2d,
    instance_norm,
    layer_norm,
    leaky_relu,
    logsumexp,
    matmul,
    relu,
    sample_bilinear,
    sigmoid,
    softmax,
    softpool,
    tanh,
)
from .optim import Adam
from .tensor import (
    Tensor,
    concat,
    exp,
    is_grad_enabled,
    log,
    mean,
    no_grad,
    reshape,
    sqrt,
    stack,
    transpose,
)

__all__ = [
    "Adam", "Conv2d", "LayerNorm", "Linear", "Module", "Parameter", "Tensor",
    "bilinear_resize", "concat", "conv2d", "exp", "grad_check", "is_grad_enabled",
    "instance_norm", "layer_norm", "leaky_relu", "load_arrays", "load_module", "log", "logsumexp",
    "matmul", "mean", "no_grad", "relu", "reshape", "sample_bilinear", "save_arrays",
    "save_module", "sigmoid", "softmax", "softpool", "sqrt", "stack", "tanh",
    "transpose", "zero_",
]
