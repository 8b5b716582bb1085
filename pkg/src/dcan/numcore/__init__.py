"""Dense tensors with reverse-mode differentiation."""

from .autodiff import backward
from .gradcheck import grad_check
from .ops import (
    activation,
    add,
    bce_with_logits,
    conv1d_dilated,
    dropout,
    embedding,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    sigmoid,
    softmax,
    sub,
    swapaxes,
    tanh,
    transpose,
    weight_norm,
)
from .ops import max as reduce_max
from .ops import sum as reduce_sum
from .tensor import DEFAULT_DTYPE, RngStream, Tape, Tensor, as_tensor, no_grad

__all__ = [
    "DEFAULT_DTYPE",
    "RngStream",
    "Tape",
    "Tensor",
    "activation",
    "add",
    "as_tensor",
    "backward",
    "bce_with_logits",
    "conv1d_dilated",
    "dropout",
    "embedding",
    "grad_check",
    "matmul",
    "mean",
    "mul",
    "no_grad",
    "reduce_max",
    "reduce_sum",
    "relu",
    "reshape",
    "sigmoid",
    "softmax",
    "sub",
    "swapaxes",
    "tanh",
    "transpose",
    "weight_norm",
]
