"""Generator compiled from a DAG: one multi-input LSTM cell per column.

Tensors are batch-first: every per-variable tensor is (rows, features).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import (
    ShapeError,
    Tensor,
    concat,
    fully_connected,
    glorot,
    sigmoid,
    softmax_rows,
    tanh,
    zeros,
)
from .autodiff.tensor import broadcast_to
from .dag import Dag, derive_sets, ensure_valid, topo_order
from .data.encoding import EncodedTable
from .data.table import ColumnMeta


@dataclass(frozen=True)
class GeneratorSizes:
    hidden: int = 50  # N_h
    noise: int = 50  # N_z
    conv: int = 50  # N_conv
    batch: int = 500  # N_b

    def __post_init__(self):
        for k in ("hidden", "noise", "conv", "batch"):
            if getattr(self, k) < 1:
                raise ValueError(f"{k} size must be >= 1")


@dataclass
class CellSpec:
    name: str
    meta: ColumnMeta
    ancestors: tuple[str, ...]  # A(V_t), in construction order
    direct: tuple[str, ...]  # D(V_t), in construction order
    sources: frozenset[str]
    has_children: bool
    params: dict[str, Tensor] = field(default_factory=dict)

    @property
    def is_source(self) -> bool:
        return not self.direct


def cell_step(i_t: Tensor, c_prev: Tensor, weight: Tensor, bias: Tensor) -> tuple[Tensor, Tensor]:
    """LSTM update from the concatenated input; gate blocks [forget, input, candidate, output]."""
    n_h = c_prev.shape[1]
    if weight.shape != (i_t.shape[1], 4 * n_h):
        raise ShapeError("cell_step", i_t.shape, weight.shape, c_prev.shape)
    z = fully_connected(i_t, weight, bias)
    forget = sigmoid(z[:, :n_h])
    inp = sigmoid(z[:, n_h : 2 * n_h])
    cand = tanh(z[:, 2 * n_h : 3 * n_h])
    out = sigmoid(z[:, 3 * n_h :])
    c_t = forget * c_prev + inp * cand
    return out * tanh(c_t), c_t


def attention(outputs: Sequence[Tensor], alpha: Tensor) -> Tensor:
    """Softmax(alpha)-weighted sum of ancestor outputs."""
    if alpha.shape != (1, len(outputs)):
        raise ShapeError("attention", alpha.shape, detail=f"{len(outputs)} ancestor outputs")
    weights = softmax_rows(alpha)
    total = None
    for k, h in enumerate(outputs):
        term = weights[:, k : k + 1] * h
        total = term if total is None else total + term
    return total


def merge_inputs(
    states: Sequence[tuple[Tensor, Tensor]],
    c_layer: tuple[Tensor, Tensor] | None = None,
    f_layer: tuple[Tensor, Tensor] | None = None,
) -> tuple[Tensor, Tensor]:
    """Fuse (C, f) pairs of the direct ancestors; one pair passes through."""
    if len(states) == 1:
        return states[0]
    c = fully_connected(concat([s[0] for s in states], axis=1), *c_layer)
    f = fully_connected(concat([s[1] for s in states], axis=1), *f_layer)
    return c, f


def output_transform(h_t: Tensor, meta: ColumnMeta, params: dict[str, Tensor]) -> tuple:
    hp = tanh(fully_connected(h_t, params["conv/W"], params["conv/b"]))
    if meta.is_continuous:
        w = tanh(fully_connected(hp, params["w/W"], params["w/b"]))
        p = softmax_rows(fully_connected(hp, params["p/W"], params["p/b"]))
        return w, p
    return (softmax_rows(fully_connected(hp, params["o/W"], params["o/b"])),)


def input_transform(block: tuple, params: dict[str, Tensor]) -> Tensor:
    x = block[0] if len(block) == 1 else concat(list(block), axis=1)
    return fully_connected(x, params["in/W"], params["in/b"])


class Generator:
    """Cells in construction order plus the shared noise-routing layers."""

    def __init__(
        self,
        cells: list[CellSpec],
        routes: dict[frozenset, tuple[Tensor, Tensor]],
        sizes: GeneratorSizes,
        columns: Sequence[str],
    ):
        self.cells = cells
        self.routes = routes
        self.sizes = sizes
        self.by_name = {c.name: c for c in cells}
        self.metas = [self.by_name[n].meta for n in columns]

    @classmethod
    def build(cls, dag: Dag, metas: Sequence[ColumnMeta], sizes: GeneratorSizes = GeneratorSizes(), seed: int = 0) -> "Generator":
        columns = [m.name for m in metas]
        ensure_valid(dag, columns)
        meta_of = {m.name: m for m in metas}
        order = topo_order(dag, columns)
        rank = {n: i for i, n in enumerate(order)}
        sets = derive_sets(dag)
        rng = np.random.default_rng(seed)
        n_h, n_z, n_c = sizes.hidden, sizes.noise, sizes.conv
        cells: list[CellSpec] = []
        routes: dict[frozenset, tuple[Tensor, Tensor]] = {}
        for name in order:
            s = sets[name]
            meta = meta_of[name]
            cell = CellSpec(
                name=name,
                meta=meta,
                ancestors=tuple(sorted(s.ancestors, key=rank.__getitem__)),
                direct=tuple(sorted(s.direct_ancestors, key=rank.__getitem__)),
                sources=s.sources,
                has_children=bool(dag.children(name)),
            )
            p = cell.params

            def add(key, tensor):
                tensor.name = f"{name}/{key}"
                p[key] = tensor

            add("lstm/W", glorot(rng, 2 * n_h + n_z, 4 * n_h, ""))
            add("lstm/b", zeros((4 * n_h,), ""))
            if cell.is_source:
                add("f0", glorot(rng, 1, n_h, ""))
            else:
                add("alpha", zeros((1, len(cell.ancestors)), ""))
                if cell.sources not in routes:
                    tag = "route[" + ",".join(sorted(cell.sources, key=rank.__getitem__)) + "]"
                    routes[cell.sources] = (
                        Tensor(glorot(rng, len(cell.sources) * n_z, n_z, "").data, True, f"{tag}/W"),
                        zeros((n_z,), f"{tag}/b"),
                    )
            if len(cell.direct) > 1:
                k = len(cell.direct)
                add("mergeC/W", glorot(rng, k * n_h, n_h, ""))
                add("mergeC/b", zeros((n_h,), ""))
                add("mergef/W", glorot(rng, k * n_h, n_h, ""))
                add("mergef/b", zeros((n_h,), ""))
            add("conv/W", glorot(rng, n_h, n_c, ""))
            add("conv/b", zeros((n_c,), ""))
            heads = ("w", "p") if meta.is_continuous else ("o",)
            for head in heads:
                add(f"{head}/W", glorot(rng, n_c, meta.width // len(heads), ""))
                add(f"{head}/b", zeros((meta.width // len(heads),), ""))
            if cell.has_children:
                add("in/W", glorot(rng, meta.width, n_h, ""))
                add("in/b", zeros((n_h,), ""))
            cells.append(cell)
        return cls(cells, routes, sizes, columns)

    # -------------------------------------------------------------- params

    def parameters(self) -> list[Tensor]:
        out = [t for c in self.cells for t in c.params.values()]
        for w, b in self.routes.values():
            out += [w, b]
        return out

    def named_parameters(self) -> dict[str, Tensor]:
        return {t.name: t for t in self.parameters()}

    # ------------------------------------------------------------- forward

    def draw_noise(self, n_rows: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        return {
            c.name: rng.standard_normal((n_rows, self.sizes.noise))
            for c in self.cells
            if c.is_source
        }

    def route_noise(self, draws: dict[str, np.ndarray]) -> dict[str, Tensor]:
        """Per-variable noise; variables with the same source set share one tensor."""
        source_z = {n: Tensor(z) for n, z in draws.items()}
        cache: dict[frozenset, Tensor] = {}
        out = {}
        for c in self.cells:
            if c.is_source:
                out[c.name] = source_z[c.name]
                continue
            if c.sources not in cache:
                names = [s.name for s in self.cells if s.name in c.sources]
                w, b = self.routes[c.sources]
                cache[c.sources] = fully_connected(concat([source_z[n] for n in names], axis=1), w, b)
            out[c.name] = cache[c.sources]
        return out

    def forward(self, n_rows: int, rng: np.random.Generator | int) -> EncodedTable:
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        return self.forward_noise(self.draw_noise(n_rows, rng))

    def forward_noise(self, draws: dict[str, np.ndarray]) -> EncodedTable:
        n_rows = next(iter(draws.values())).shape[0]
        n_h = self.sizes.hidden
        z = self.route_noise(draws)
        h: dict[str, Tensor] = {}
        state: dict[str, tuple[Tensor, Tensor]] = {}
        blocks = {}
        for c in self.cells:
            p = c.params
            if c.is_source:
                a_t = Tensor(np.zeros((n_rows, n_h)))
                c_prev = Tensor(np.zeros((n_rows, n_h)))
                f_prev = broadcast_to(p["f0"], (n_rows, n_h))
            else:
                a_t = attention([h[n] for n in c.ancestors], p["alpha"])
                merged = merge_inputs(
                    [state[n] for n in c.direct],
                    (p.get("mergeC/W"), p.get("mergeC/b")),
                    (p.get("mergef/W"), p.get("mergef/b")),
                )
                c_prev, f_prev = merged
            i_t = concat([f_prev, a_t, z[c.name]], axis=1)
            h_t, c_t = cell_step(i_t, c_prev, p["lstm/W"], p["lstm/b"])
            h[c.name] = h_t
            block = output_transform(h_t, c.meta, p)
            blocks[c.name] = block
            if c.has_children:
                state[c.name] = (c_t, input_transform(block, p))
        return EncodedTable(list(self.metas), blocks)
