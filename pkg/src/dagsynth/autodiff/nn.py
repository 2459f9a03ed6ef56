"""Layer-level ops built on the tensor primitives."""

from __future__ import annotations

import numpy as np

from . import kernels
from .tensor import (
    ShapeError,
    Tensor,
    _result,
    as_tensor,
    is_recording,
    matmul,
    mean,
    sqrt,
)

NORM_EPS = 1e-5


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, name: str) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)), True, name)


def zeros(shape, name: str) -> Tensor:
    return Tensor(np.zeros(shape), True, name)


def fully_connected(x, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError("fully_connected", x.shape, weight.shape)
    out = matmul(x, weight)
    return out if bias is None else out + bias


def _normalize(x: Tensor, axis: int, gamma, beta) -> Tensor:
    mu = mean(x, axis=axis, keepdims=True)
    centred = x - mu
    var = mean(centred * centred, axis=axis, keepdims=True)
    out = centred / sqrt(var + NORM_EPS)
    if gamma is not None:
        out = out * gamma
    if beta is not None:
        out = out + beta
    return out


def batch_norm(x, gamma=None, beta=None) -> Tensor:
    """Normalize each feature over the batch (always batch statistics)."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError("batch_norm", x.shape, detail="expects (rows, features)")
    return _normalize(x, 0, gamma, beta)


def layer_norm(x, gamma=None, beta=None) -> Tensor:
    """Normalize each row over its features."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError("layer_norm", x.shape, detail="expects (rows, features)")
    return _normalize(x, 1, gamma, beta)


# ------------------------------------------------- mini-batch discrimination


def minibatch_features(m) -> Tensor:
    """Diversity features from projected rows ``m`` of shape (rows, B, C).

    out[i, b] = sum_{j != i} exp(-||m[i, b] - m[j, b]||_1)
    """
    m = as_tensor(m)
    if m.ndim != 3:
        raise ShapeError("minibatch_features", m.shape, detail="expects (rows, B, C)")
    if m.shape[0] < 2:
        raise ShapeError("minibatch_features", m.shape, detail="needs at least 2 rows")
    mb = np.ascontiguousarray(m.data.transpose(1, 0, 2))
    e = kernels.similarity(mb)
    data = (e.sum(axis=2) - 1.0).T.copy()
    return _result(data, "minibatch_features", (m,), lambda g: (_mbd_vjp(m, mb, e, g),))


def _mbd_vjp(m: Tensor, mb: np.ndarray, e: np.ndarray, g: Tensor) -> Tensor:
    """Gradient of minibatch_features; itself differentiable once."""
    gb = np.ascontiguousarray(g.data.T)
    data = kernels.similarity_grad(mb, e, gb).transpose(1, 0, 2)

    def vjp(h):
        if is_recording():
            raise NotImplementedError("third-order gradients of minibatch_features")
        hb = np.ascontiguousarray(h.data.transpose(1, 0, 2))
        ek = e * kernels.signed_contraction_sym(mb, hb)
        dg = -ek.sum(axis=2).T
        q = (gb[:, :, None] + gb[:, None, :]) * ek
        dm = kernels.signed_sum_sym(mb, np.ascontiguousarray(q)).transpose(1, 0, 2)
        return Tensor(np.ascontiguousarray(dm)), Tensor(dg)

    return _result(np.ascontiguousarray(data), "minibatch_features_vjp", (m, g), vjp)
