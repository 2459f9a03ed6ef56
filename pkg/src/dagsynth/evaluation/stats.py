"""Joint frequency lists and the five comparison metrics."""

from __future__ import annotations

import logging
from itertools import combinations
from typing import Sequence

import numpy as np
import pandas as pd

from ..data.encoding import bin_continuous
from ..data.table import ColumnMeta

log = logging.getLogger(__name__)

METRICS = ("MAE", "RMSE", "SRMSE", "R2", "Pearson")
N_BINS = 10


def discretize(
    table: pd.DataFrame,
    metas: Sequence[ColumnMeta],
    ranges: dict[str, tuple[float, float]] | None = None,
) -> pd.DataFrame:
    """Replace continuous columns by bin indices (ranges default to the table's own)."""
    out = {}
    for m in metas:
        col = table[m.name]
        if m.is_continuous:
            rng = None if ranges is None else ranges[m.name]
            out[m.name] = bin_continuous(col.to_numpy(dtype=np.float64), N_BINS, rng)
        else:
            out[m.name] = col.to_numpy()
    return pd.DataFrame(out, index=table.index)


def column_ranges(table: pd.DataFrame, metas: Sequence[ColumnMeta]) -> dict[str, tuple[float, float]]:
    return {
        m.name: (float(table[m.name].min()), float(table[m.name].max()))
        for m in metas
        if m.is_continuous
    }


def _key(v) -> tuple:
    v = v if isinstance(v, tuple) else (v,)
    return tuple(x.item() if isinstance(x, np.generic) else x for x in v)


def frequency_list(
    table: pd.DataFrame,
    columns: Sequence[str],
    metas: Sequence[ColumnMeta] | None = None,
    ranges: dict[str, tuple[float, float]] | None = None,
) -> dict[tuple, float]:
    """Relative frequency of each joint value over ``columns``.

    With ``metas`` given, continuous columns are binned first (10 equal-width
    bins over ``ranges``); without them the table is assumed discrete.
    """
    columns = list(columns)
    if not 1 <= len(columns) <= 3:
        raise ValueError("frequency lists are defined for 1 to 3 columns")
    unknown = [c for c in columns if c not in table.columns]
    if unknown:
        raise KeyError(f"unknown columns {unknown}")
    if metas is not None:
        by_name = {m.name: m for m in metas}
        table = discretize(table[columns], [by_name[c] for c in columns], ranges)
    if len(table) == 0:
        return {}
    counts = table.groupby(columns, sort=True).size()
    total = counts.sum()
    return {_key(k): c / total for k, c in counts.items()}


def compare(original: dict, synthetic: dict) -> dict[str, float]:
    """Metrics over the union of keys with zero-fill; NaN where undefined."""
    keys = list(original.keys() | synthetic.keys())
    if not keys:
        raise ValueError("both frequency lists are empty")
    a = np.array([original.get(k, 0.0) for k in keys])
    b = np.array([synthetic.get(k, 0.0) for k in keys])
    diff = b - a
    rmse = float(np.sqrt(np.mean(diff**2)))
    mean_a = a.mean()
    spread = float(np.sum((a - mean_a) ** 2))
    r2 = 1.0 - float(np.sum(diff**2)) / spread if spread > 0 else float("nan")
    sa, sb = a.std(), b.std()
    pearson = float(np.mean((a - mean_a) * (b - b.mean())) / (sa * sb)) if sa > 0 and sb > 0 else float("nan")
    return {
        "MAE": float(np.mean(np.abs(diff))),
        "RMSE": rmse,
        "SRMSE": rmse / mean_a,
        "R2": r2,
        "Pearson": pearson,
    }


def statistical_report(
    original: pd.DataFrame,
    synthetic: pd.DataFrame,
    metas: Sequence[ColumnMeta],
    orders: Sequence[int] = (1, 2, 3),
) -> dict:
    """Per order: metric means over all column combinations, plus bookkeeping.

    Returns ``{order: {"n_combinations": k, "excluded": {metric: n}, metric: mean}}``.
    Undefined values (constant lists) are left out of the mean and counted.
    """
    ranges = column_ranges(original, metas)
    orig = discretize(original, metas, ranges)
    synth = discretize(synthetic, metas, ranges)
    names = [m.name for m in metas]
    report = {}
    for order in orders:
        rows = [
            compare(frequency_list(orig, combo), frequency_list(synth, combo))
            for combo in combinations(names, order)
        ]
        block = {"n_combinations": len(rows), "excluded": {}}
        for metric in METRICS:
            values = np.array([r[metric] for r in rows], dtype=np.float64)
            ok = np.isfinite(values)
            block["excluded"][metric] = int((~ok).sum())
            if (~ok).any():
                log.info("order %d %s: %d undefined combinations excluded", order, metric, (~ok).sum())
            block[metric] = float(values[ok].mean()) if ok.any() else float("nan")
        report[order] = block
    return report
