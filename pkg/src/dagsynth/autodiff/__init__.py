"""Minimal float64 tensor engine with reverse-mode autodiff and optimizers."""

from .nn import (
    batch_norm,
    fully_connected,
    glorot,
    layer_norm,
    minibatch_features,
    zeros,
)
from .optim import Adam, NonFiniteGradientError, Optimizer, RMSProp, clip_weights
from .tensor import (
    NonFiniteError,
    ShapeError,
    Tensor,
    absolute,
    add,
    as_tensor,
    clamp_min,
    concat,
    div,
    exp,
    gradients,
    is_recording,
    leaky_relu,
    log,
    matmul,
    mean,
    mul,
    no_grad,
    power,
    sigmoid,
    softmax_rows,
    sqrt,
    sub,
    tanh,
    tape,
    tsum,
)

OPS = {
    "matmul": matmul,
    "add": add,
    "concat": lambda *xs, axis=-1: concat(xs, axis=axis),
    "fully_connected": fully_connected,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "softmax_rows": softmax_rows,
    "leaky_relu": leaky_relu,
    "log": log,
    "mean": mean,
    "batch_norm": batch_norm,
    "layer_norm": layer_norm,
}


def forward_op(kind: str, *inputs, **kwargs) -> Tensor:
    """Dispatch a named op; unknown names raise ``KeyError``."""
    try:
        fn = OPS[kind]
    except KeyError:
        raise KeyError(f"unknown op {kind!r}; expected one of {sorted(OPS)}") from None
    return fn(*inputs, **kwargs)


__all__ = [
    "OPS",
    "Adam",
    "NonFiniteError",
    "NonFiniteGradientError",
    "Optimizer",
    "RMSProp",
    "ShapeError",
    "Tensor",
    "absolute",
    "add",
    "as_tensor",
    "batch_norm",
    "clamp_min",
    "clip_weights",
    "concat",
    "div",
    "exp",
    "forward_op",
    "fully_connected",
    "glorot",
    "gradients",
    "is_recording",
    "layer_norm",
    "leaky_relu",
    "log",
    "matmul",
    "mean",
    "minibatch_features",
    "mul",
    "no_grad",
    "power",
    "sigmoid",
    "softmax_rows",
    "sqrt",
    "sub",
    "tanh",
    "tape",
    "tsum",
    "zeros",
]
