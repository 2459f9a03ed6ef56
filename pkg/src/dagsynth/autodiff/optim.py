from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import Tensor


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, name: str):
        self.param = name
        super().__init__(f"non-finite gradient for parameter {name!r}")


def _arrays(grads) -> list[np.ndarray]:
    return [g.data if isinstance(g, Tensor) else np.asarray(g, dtype=np.float64) for g in grads]


class Optimizer:
    """Base class; subclasses keep one accumulator array per parameter."""

    slots: tuple[str, ...] = ()

    def __init__(self, params: Sequence[Tensor], lr: float):
        self.params = list(params)
        self.lr = float(lr)
        self.step_count = 0
        self.state = {
            slot: [np.zeros_like(p.data) for p in self.params] for slot in self.slots
        }

    def step(self, grads) -> None:
        grads = _arrays(grads)
        if len(grads) != len(self.params):
            raise ValueError(f"got {len(grads)} gradients for {len(self.params)} parameters")
        for p, g in zip(self.params, grads):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} ({p.name})")
            if not np.isfinite(g).all():
                raise NonFiniteGradientError(p.name or "<unnamed>")
        self.step_count += 1
        for k, (p, g) in enumerate(zip(self.params, grads)):
            p.data = p.data - self._update(k, g)

    def _update(self, k: int, g: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {
            f"{slot}/{p.name}": arr
            for slot in self.slots
            for p, arr in zip(self.params, self.state[slot])
        }

    def load_state_arrays(self, arrays: dict[str, np.ndarray], step_count: int) -> None:
        for slot in self.slots:
            self.state[slot] = [np.array(arrays[f"{slot}/{p.name}"]) for p in self.params]
        self.step_count = int(step_count)


class Adam(Optimizer):
    slots = ("m", "v")

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        super().__init__(params, lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def _update(self, k, g):
        m = self.beta1 * self.state["m"][k] + (1.0 - self.beta1) * g
        v = self.beta2 * self.state["v"][k] + (1.0 - self.beta2) * g * g
        self.state["m"][k], self.state["v"][k] = m, v
        m_hat = m / (1.0 - self.beta1**self.step_count)
        v_hat = v / (1.0 - self.beta2**self.step_count)
        return self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class RMSProp(Optimizer):
    slots = ("ms",)

    def __init__(self, params, lr=2e-4, decay=0.9, eps=1e-8):
        super().__init__(params, lr)
        self.decay, self.eps = decay, eps

    def _update(self, k, g):
        ms = self.decay * self.state["ms"][k] + (1.0 - self.decay) * g * g
        self.state["ms"][k] = ms
        return self.lr * g / (np.sqrt(ms) + self.eps)


def clip_weights(params: Sequence[Tensor], c: float = 0.01) -> Sequence[Tensor]:
    """Clamp every parameter value into [-c, c] (WGAN critic constraint)."""
    if not c > 0:
        raise ValueError(f"clip bound must be positive, got {c}")
    for p in params:
        p.data = np.clip(p.data, -c, c)
    return params
