from .tensor import (
    Tensor,
    affine,
    clip,
    concat,
    conv2d,
    gather,
    grad_enabled,
    log_softmax,
    maximum,
    minimum,
    no_grad,
    softmax,
    stack,
)
from .modules import Conv2d, GRUCell, Linear, LSTMCell, Module
from .optim import Adam, clip_global_norm
from .checkpoint import load_tensors, save_tensors

__all__ = [
    "Tensor", "affine", "clip", "concat", "conv2d", "gather", "grad_enabled",
    "log_softmax", "maximum", "minimum", "no_grad", "softmax", "stack",
    "Conv2d", "GRUCell", "Linear", "LSTMCell", "Module",
    "Adam", "clip_global_norm", "load_tensors", "save_tensors",
]
