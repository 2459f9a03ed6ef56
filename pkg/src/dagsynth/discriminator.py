"""Fully connected critic with mini-batch discrimination and label smoothing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    ShapeError,
    Tensor,
    as_tensor,
    batch_norm,
    concat,
    fully_connected,
    glorot,
    layer_norm,
    leaky_relu,
    minibatch_features,
    tsum,
    zeros,
)
from .data.encoding import EncodedTable

SMOOTHING = ("NO", "OS", "TS")
NORMS = ("batch", "layer")


@dataclass(frozen=True)
class DiscriminatorSpec:
    n_layers: int = 2  # N_L
    width: int = 100  # N_l
    norm: str = "batch"
    mbd_kernels: int = 10  # B
    mbd_dims: int = 10  # C
    smoothing: str = "TS"
    gamma: float = 0.2

    def __post_init__(self):
        if self.n_layers < 1 or self.width < 1:
            raise ValueError("critic needs at least one layer of positive width")
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}")
        if self.smoothing not in SMOOTHING:
            raise ValueError(f"smoothing must be one of {SMOOTHING}")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.mbd_kernels < 0 or self.mbd_dims < 1:
            raise ValueError("bad mini-batch discrimination sizes")


def label_smooth(o, gamma: float, rng: np.random.Generator):
    """(o + U[0, gamma]) renormalised to unit row sums; gamma = 0 is the identity.

    Works on arrays and on tensors (then the noise is a constant).
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if gamma == 0:
        return o
    noisy = o + rng.uniform(0.0, gamma, size=o.shape)
    if isinstance(noisy, Tensor):
        return noisy / tsum(noisy, axis=1, keepdims=True)
    return noisy / noisy.sum(axis=1, keepdims=True)


def smooths(strategy: str, side: str) -> bool:
    if side not in ("original", "synthetic"):
        raise ValueError(f"unknown side {side!r}")
    return strategy == "TS" or (strategy == "OS" and side == "original")


def assemble_input(
    encoded: EncodedTable,
    side: str,
    strategy: str,
    gamma: float,
    rng: np.random.Generator,
) -> Tensor:
    """Concatenate the blocks into the critic input, smoothing one-hot blocks per strategy."""
    smooth = smooths(strategy, side)
    parts = []
    for m in encoded.metas:
        block = encoded.blocks[m.name]
        if m.is_continuous:
            parts += [as_tensor(b) for b in block]
        else:
            o = block[0]
            parts.append(as_tensor(label_smooth(o, gamma, rng) if smooth else o))
    return concat(parts, axis=1)


def minibatch_discrimination(features: Tensor, projection: Tensor, kernels: int, dims: int) -> Tensor:
    """Diversity features (rows, kernels) from a learned projection of ``features``."""
    if features.shape[0] < 2:
        raise ShapeError("minibatch_discrimination", features.shape, detail="batch of 1")
    m = fully_connected(features, projection).reshape(features.shape[0], kernels, dims)
    return minibatch_features(m)


class Discriminator:
    def __init__(self, spec: DiscriminatorSpec, in_width: int, seed: int = 0):
        self.spec = spec
        self.in_width = in_width
        rng = np.random.default_rng(seed)
        self.layers: list[dict[str, Tensor]] = []
        width_in = in_width
        n_l, b, c = spec.width, spec.mbd_kernels, spec.mbd_dims
        for i in range(spec.n_layers):
            layer = {
                "W": glorot(rng, width_in, n_l, f"critic/{i}/W"),
                "b": zeros((n_l,), f"critic/{i}/b"),
            }
            if b:
                layer["T"] = glorot(rng, n_l, b * c, f"critic/{i}/T")
            layer["gamma"] = Tensor(np.ones(n_l + b), True, f"critic/{i}/gamma")
            layer["beta"] = zeros((n_l + b,), f"critic/{i}/beta")
            self.layers.append(layer)
            width_in = n_l + b
        self.head = {
            "W": glorot(rng, width_in, 1, "critic/out/W"),
            "b": zeros((1,), "critic/out/b"),
        }

    def parameters(self) -> list[Tensor]:
        out = [t for layer in self.layers for t in layer.values()]
        return out + [self.head["W"], self.head["b"]]

    def named_parameters(self) -> dict[str, Tensor]:
        return {t.name: t for t in self.parameters()}

    def weights(self) -> list[Tensor]:
        """Parameters subject to weight clipping (all of them, norm affine included)."""
        return self.parameters()

    def forward(self, l0) -> Tensor:
        """Unbounded score per row, shape (rows, 1)."""
        x = as_tensor(l0)
        if x.ndim != 2 or x.shape[1] != self.in_width:
            raise ShapeError("critic", x.shape, detail=f"expects width {self.in_width}")
        norm = batch_norm if self.spec.norm == "batch" else layer_norm
        for layer in self.layers:
            lhat = fully_connected(x, layer["W"], layer["b"])
            if "T" in layer:
                div = minibatch_discrimination(lhat, layer["T"], self.spec.mbd_kernels, self.spec.mbd_dims)
                lhat = concat([lhat, div], axis=1)
            x = leaky_relu(norm(lhat, layer["gamma"], layer["beta"]))
        return fully_connected(x, self.head["W"], self.head["b"])

    __call__ = forward
