"""Minimal float64 autodiff: tape, primitives, Adam, gradient checking."""

from .gradcheck import grad_check
from .optim import Adam, AdamState, adam_step
from .tensor import (
    NonFiniteError,
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    add,
    apply_primitive,
    backward,
    concat,
    divide,
    exp,
    gather,
    layer_norm,
    log,
    log_softmax,
    matmul,
    maximum,
    multiply,
    reduce_max,
    reduce_mean,
    reduce_sum,
    relu,
    replay,
    reshape,
    scalar_multiply,
    sigmoid,
    softmax,
    softmax_op,
    sqrt,
    subtract,
    take_slice,
    tanh,
    transpose,
)

__all__ = [
    "Adam",
    "AdamState",
    "NonFiniteError",
    "ShapeError",
    "Tape",
    "TapeError",
    "Tensor",
    "adam_step",
    "add",
    "apply_primitive",
    "backward",
    "concat",
    "divide",
    "exp",
    "gather",
    "grad_check",
    "layer_norm",
    "log",
    "log_softmax",
    "matmul",
    "maximum",
    "multiply",
    "reduce_max",
    "reduce_mean",
    "reduce_sum",
    "relu",
    "replay",
    "reshape",
    "scalar_multiply",
    "sigmoid",
    "softmax",
    "softmax_op",
    "sqrt",
    "subtract",
    "take_slice",
    "tanh",
    "transpose",
]
