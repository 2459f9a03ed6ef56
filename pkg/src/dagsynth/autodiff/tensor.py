"""Dense float64 tensors with reverse-mode automatic differentiation.

Every op records its parents and a vector-Jacobian product (vjp) written in
terms of other tensor ops. Running the backward pass with
``create_graph=True`` therefore records the backward computation itself,
which is what the gradient penalty needs (a gradient of a gradient norm).
"""

from __future__ import annotations

import contextlib
import weakref
from typing import Callable, Iterable, Sequence

import numpy as np

_recording = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _recording
    previous = _recording
    _recording = False
    try:
        yield
    finally:
        _recording = previous


def is_recording() -> bool:
    return _recording


class ShapeError(ValueError):
    """Raised when an op receives incompatible shapes."""

    def __init__(self, op: str, *shapes: tuple, detail: str = ""):
        self.op = op
        self.shapes = shapes
        msg = f"{op}: incompatible shapes {', '.join(str(s) for s in shapes)}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NonFiniteError(FloatingPointError):
    def __init__(self, op: str):
        self.op = op
        super().__init__(f"{op}: produced non-finite values")


Vjp = Callable[["Tensor"], Sequence["Tensor | None"]]


class Tensor:
    """A node in the computation graph.

    ``data`` is never mutated in place by the engine; optimizers rebind it.
    """

    __slots__ = ("data", "requires_grad", "name", "op", "_parents", "_vjp", "__weakref__")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Vjp | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.size == 1 else float(self.data)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label})"

    def __len__(self) -> int:
        return self.shape[0]

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, op: str, parents: tuple[Tensor, ...], vjp: Vjp) -> Tensor:
    if not np.isfinite(data).all():
        raise NonFiniteError(op)
    out = Tensor(data)
    out.op = op
    if _recording and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    return out


# ---------------------------------------------------------------- broadcasting


def _sum_to_shape(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        i + lead for i, n in enumerate(shape) if n == 1 and g.shape[i + lead] != 1
    )
    return g.sum(axis=axes, keepdims=True).reshape(shape)


def sum_to(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Reduce a broadcast result back to ``shape``."""
    x = as_tensor(x)
    shape = tuple(shape)
    if x.shape == shape:
        return x
    src = x.shape
    return _result(
        _sum_to_shape(x.data, shape), "sum_to", (x,), lambda g: (broadcast_to(g, src),)
    )


def broadcast_to(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    shape = tuple(shape)
    if x.shape == shape:
        return x
    try:
        data = np.broadcast_to(x.data, shape)
    except ValueError:
        raise ShapeError("broadcast_to", x.shape, shape) from None
    src = x.shape
    return _result(np.array(data), "broadcast_to", (x,), lambda g: (sum_to(g, src),))


def _binary_shape(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# ------------------------------------------------------------ elementwise ops


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape("add", a, b)
    return _result(
        a.data + b.data, "add", (a, b), lambda g: (sum_to(g, a.shape), sum_to(g, b.shape))
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape("sub", a, b)
    return _result(
        a.data - b.data,
        "sub",
        (a, b),
        lambda g: (sum_to(g, a.shape), sum_to(neg(g), b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape("mul", a, b)
    return _result(
        a.data * b.data,
        "mul",
        (a, b),
        lambda g: (sum_to(g * b, a.shape), sum_to(g * a, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape("div", a, b)

    def vjp(g):
        return sum_to(g / b, a.shape), sum_to(neg(g) * a / (b * b), b.shape)

    return _result(a.data / b.data, "div", (a, b), vjp)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _result(-a.data, "neg", (a,), lambda g: (neg(g),))


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    p = float(exponent)
    return _result(a.data**p, "power", (a,), lambda g: (g * p * power(a, p - 1.0),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    ref = None  # weak self-reference avoids a node <-> closure cycle

    def vjp(g):
        return (g * ref(),)

    out = _result(np.exp(a.data), "exp", (a,), vjp)
    ref = weakref.ref(out)
    return out


def log(a) -> Tensor:
    a = as_tensor(a)
    if (a.data <= 0).any():
        raise NonFiniteError("log")
    return _result(np.log(a.data), "log", (a,), lambda g: (g / a,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    ref = None  # weak self-reference avoids a node <-> closure cycle

    def vjp(g):
        return (g * 0.5 / ref(),)

    out = _result(np.sqrt(a.data), "sqrt", (a,), vjp)
    ref = weakref.ref(out)
    return out


def tanh(a) -> Tensor:
    a = as_tensor(a)
    ref = None  # weak self-reference avoids a node <-> closure cycle

    def vjp(g):
        y = ref()
        return (g * (1.0 - y * y),)

    out = _result(np.tanh(a.data), "tanh", (a,), vjp)
    ref = weakref.ref(out)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    # split by sign so exp never overflows
    z = np.exp(-np.abs(x))
    data = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    ref = None  # weak self-reference avoids a node <-> closure cycle

    def vjp(g):
        y = ref()
        return (g * y * (1.0 - y),)

    out = _result(data, "sigmoid", (a,), vjp)
    ref = weakref.ref(out)
    return out


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    mask = np.where(a.data > 0, 1.0, slope)
    return _result(a.data * mask, "leaky_relu", (a,), lambda g: (g * mask,))


def absolute(a) -> Tensor:
    a = as_tensor(a)
    sign = np.sign(a.data)
    return _result(np.abs(a.data), "abs", (a,), lambda g: (g * sign,))


def clamp_min(a, floor: float) -> Tensor:
    """max(a, floor); the gradient is zero where the floor is active."""
    a = as_tensor(a)
    mask = (a.data > floor).astype(np.float64)
    return _result(np.maximum(a.data, floor), "clamp_min", (a,), lambda g: (g * mask,))


# ------------------------------------------------------------------ linear ops


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    return _result(a.data @ b.data, "matmul", (a, b), lambda g: (g @ b.T, a.T @ g))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError("transpose", a.shape, detail="expects a matrix")
    return _result(a.data.T.copy(), "transpose", (a,), lambda g: (transpose(g),))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    src = a.shape
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", src, tuple(shape)) from None
    return _result(data, "reshape", (a,), lambda g: (reshape(g, src),))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat", detail="no inputs")
    try:
        data = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError("concat", *(t.shape for t in ts)) from None
    if len(ts) == 1:
        return ts[0]
    ax = axis % data.ndim
    bounds = np.cumsum([0] + [t.shape[ax] for t in ts])

    def vjp(g):
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            index = [slice(None)] * data.ndim
            index[ax] = slice(int(lo), int(hi))
            out.append(getitem(g, tuple(index)))
        return out

    return _result(data, "concat", tuple(ts), vjp)


def getitem(a, index) -> Tensor:
    a = as_tensor(a)
    src = a.shape
    return _result(
        np.array(a.data[index]), "getitem", (a,), lambda g: (scatter(g, index, src),)
    )


def scatter(g, index, shape) -> Tensor:
    """Zeros of ``shape`` with ``g`` written at ``index`` (adjoint of getitem)."""
    g = as_tensor(g)
    data = np.zeros(shape)
    np.add.at(data, index, g.data) if _is_fancy(index) else data.__setitem__(index, g.data)
    return _result(data, "scatter", (g,), lambda h: (getitem(h, index),))


def _is_fancy(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


# ----------------------------------------------------------------- reductions


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    src = a.shape
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            kept = list(src)
            for ax in axes:
                kept[ax % len(src)] = 1
            g = reshape(g, tuple(kept))
        elif axis is None and not keepdims:
            g = reshape(g, (1,) * len(src))
        return (broadcast_to(g, src),)

    return _result(np.asarray(data), "sum", (a,), vjp)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def softmax_rows(a) -> Tensor:
    """Softmax over the last axis."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    ref = None  # weak self-reference avoids a node <-> closure cycle

    def vjp(g):
        y = ref()
        inner = tsum(g * y, axis=-1, keepdims=True)
        return (y * (g - inner),)

    out = _result(e / e.sum(axis=-1, keepdims=True), "softmax_rows", (a,), vjp)
    ref = weakref.ref(out)
    return out


# ------------------------------------------------------------------ backward


def tape(loss: Tensor) -> list[Tensor]:
    """Nodes reachable from ``loss`` that require grad, in forward order."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def gradients(
    loss: Tensor, wrt: Iterable[Tensor], create_graph: bool = False
) -> list[Tensor]:
    """Gradient of a scalar ``loss`` with respect to each tensor in ``wrt``.

    Tensors that ``loss`` does not depend on get a zero gradient.
    """
    wrt = list(wrt)
    if loss.size != 1:
        raise ShapeError("gradients", loss.shape, detail="loss must be a scalar")
    keep = {id(w) for w in wrt}
    grads: dict[int, Tensor] = {}
    if loss.requires_grad:
        order = tape(loss)
        grads[id(loss)] = Tensor(np.ones_like(loss.data))
        ctx = contextlib.nullcontext() if create_graph else no_grad()
        with ctx:
            for node in reversed(order):
                g = grads.get(id(node)) if id(node) in keep else grads.pop(id(node), None)
                if g is None or node._vjp is None:
                    continue
                for parent, pg in zip(node._parents, node._vjp(g)):
                    if pg is None or not parent.requires_grad:
                        continue
                    prev = grads.get(id(parent))
                    grads[id(parent)] = pg if prev is None else add(prev, pg)
    return [grads.get(id(w), Tensor(np.zeros_like(w.data))) for w in wrt]
