from . import nn
from .checkpoint import load_checkpoint, save_checkpoint
from .optim import ParamStore, adam_step
from .tensor import (
    Tensor,
    add,
    as_tensor,
    clip,
    concat,
    digamma,
    div,
    exp,
    getitem,
    layer_norm,
    lgamma,
    log,
    matmul,
    maximum,
    mean,
    minimum,
    mul,
    no_grad,
    parameter,
    power,
    relu,
    reshape,
    sigmoid,
    softmax,
    softplus,
    stack,
    sub,
    sum_,
    tanh,
    transpose,
    where,
)

__all__ = [
    "nn",
    "Tensor",
    "ParamStore",
    "adam_step",
    "save_checkpoint",
    "load_checkpoint",
    "add",
    "as_tensor",
    "clip",
    "concat",
    "digamma",
    "div",
    "exp",
    "getitem",
    "layer_norm",
    "lgamma",
    "log",
    "matmul",
    "maximum",
    "mean",
    "minimum",
    "mul",
    "no_grad",
    "parameter",
    "power",
    "relu",
    "reshape",
    "sigmoid",
    "softmax",
    "softplus",
    "stack",
    "sub",
    "sum_",
    "tanh",
    "transpose",
    "where",
]
