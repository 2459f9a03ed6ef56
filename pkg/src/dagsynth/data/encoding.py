"""Encoding tables into bounded blocks and decoding generator output."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from .mixture import MixtureModel
from .table import ColumnMeta, SchemaError, _py

W_CLIP = 0.99
STRATEGIES = ("AA", "SA", "AS", "SS")


@dataclass
class EncodedTable:
    """Per-column blocks, in metadata order.

    Continuous columns map to ``(w, p)``, categorical columns to ``(o,)``.
    Blocks are numpy arrays for real data and ``Tensor`` objects for
    generator output.
    """

    metas: list[ColumnMeta]
    blocks: dict[str, tuple]

    @property
    def n_rows(self) -> int:
        first = self.blocks[self.metas[0].name][0]
        return first.shape[0]

    @property
    def width(self) -> int:
        return sum(m.width for m in self.metas)

    def arrays(self) -> list:
        """All blocks flattened in column order (w, p for continuous; o)."""
        return [b for m in self.metas for b in self.blocks[m.name]]

    def take(self, rows: np.ndarray) -> "EncodedTable":
        return EncodedTable(
            self.metas,
            {k: tuple(b[rows] for b in v) for k, v in self.blocks.items()},
        )

    def matrix(self) -> np.ndarray:
        return np.concatenate([np.asarray(getattr(b, "data", b)) for b in self.arrays()], axis=1)


def encode_continuous(values, mixture: MixtureModel) -> tuple[np.ndarray, np.ndarray]:
    c = np.asarray(values, dtype=np.float64).reshape(-1)
    bad = np.flatnonzero(~np.isfinite(c))
    if bad.size:
        raise ValueError(f"non-finite value at row {int(bad[0])}")
    w = (c[:, None] - mixture.means[None, :]) / (mixture.delta * mixture.stds[None, :])
    return np.clip(w, -W_CLIP, W_CLIP), mixture.posterior(c)


def encode_categorical(values, meta: ColumnMeta) -> np.ndarray:
    index = {cat: k for k, cat in enumerate(meta.categories)}
    o = np.zeros((len(values), len(meta.categories)))
    for row, v in enumerate(values):
        try:
            o[row, index[_py(v)]] = 1.0
        except KeyError:
            raise SchemaError(f"{meta.name}: unseen category {v!r} at row {row}") from None
    return o


def encode_table(table: pd.DataFrame, metas: Sequence[ColumnMeta]) -> EncodedTable:
    blocks = {}
    for m in metas:
        col = table[m.name].to_numpy()
        if m.is_continuous:
            blocks[m.name] = encode_continuous(col, m.mixture)
        else:
            blocks[m.name] = (encode_categorical(col, m),)
    return EncodedTable(list(metas), blocks)


def _check_simplex(p: np.ndarray, name: str) -> None:
    if (p < -1e-6).any() or (np.abs(p.sum(axis=1) - 1.0) > 1e-6).any():
        raise ValueError(f"{name}: probability rows are not on the simplex")


def choose(p: np.ndarray, simulate: bool, rng: np.random.Generator) -> np.ndarray:
    """Pick an index per row: argmax, or a draw from the row distribution."""
    if not simulate:
        return p.argmax(axis=1)
    u = rng.random(p.shape[0])
    k = (np.cumsum(p, axis=1) < u[:, None]).sum(axis=1)
    return np.minimum(k, p.shape[1] - 1)


def decode_and_sample(
    encoded: EncodedTable,
    metas: Sequence[ColumnMeta],
    strategy: str = "SS",
    seed: int | np.random.Generator = 0,
) -> pd.DataFrame:
    """Turn encoded blocks back into a table.

    The first strategy letter picks the mixture component for continuous
    columns, the second picks the category; ``A`` = argmax, ``S`` = draw.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown sampling strategy {strategy!r}; expected one of {STRATEGIES}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    cont_sim, cat_sim = strategy[0] == "S", strategy[1] == "S"
    out = {}
    for m in metas:
        block = [np.asarray(getattr(b, "data", b)) for b in encoded.blocks[m.name]]
        if m.is_continuous:
            w, p = block
            _check_simplex(p, m.name)
            k = choose(p, cont_sim, rng)
            mix = m.mixture
            rows = np.arange(len(k))
            out[m.name] = mix.delta * w[rows, k] * mix.stds[k] + mix.means[k]
        else:
            (o,) = block
            _check_simplex(o, m.name)
            k = choose(o, cat_sim, rng)
            cats = np.empty(len(m.categories), dtype=object)
            cats[:] = list(m.categories)
            out[m.name] = _typed(cats[k], m.categories)
    return pd.DataFrame(out, columns=[m.name for m in metas])


def _typed(values: np.ndarray, categories: tuple) -> np.ndarray:
    if all(isinstance(c, (int, np.integer)) and not isinstance(c, bool) for c in categories):
        return values.astype(np.int64)
    if all(isinstance(c, (float, int)) and not isinstance(c, bool) for c in categories):
        return values.astype(np.float64)
    return values


def bin_continuous(values, n_bins: int = 10, value_range: tuple[float, float] | None = None) -> np.ndarray:
    """Equal-width bin index per value; out-of-range values go to the edge bins."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = value_range if value_range is not None else (v.min(), v.max())
    if not hi > lo:
        return np.zeros(v.shape, dtype=np.int64)
    idx = np.floor((v - lo) / (hi - lo) * n_bins).astype(np.int64)
    return np.clip(idx, 0, n_bins - 1)
