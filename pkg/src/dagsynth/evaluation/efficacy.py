"""Supervised-learning efficacy: does each column's conditional survive synthesis?"""

from __future__ import annotations

from typing import Sequence

import numpy as np
import pandas as pd
from sklearn.model_selection import KFold, StratifiedKFold

from ..data.table import ColumnMeta
from .gbdt import CLASSIFICATION, REGRESSION, train_gbdt

PROB_FLOOR = 1e-7
MODES = ("prose", "literal")


def _codes(table: pd.DataFrame, metas: Sequence[ColumnMeta]) -> np.ndarray:
    """Numeric matrix: floats for continuous columns, category indices otherwise."""
    cols = []
    for m in metas:
        if m.is_continuous:
            cols.append(table[m.name].to_numpy(dtype=np.float64))
        else:
            index = {c: k for k, c in enumerate(m.categories)}
            values = table[m.name].tolist()
            cols.append(np.array([index[v.item() if isinstance(v, np.generic) else v] for v in values], dtype=np.float64))
    return np.column_stack(cols) if cols else np.empty((len(table), 0))


def normalized_log_loss(proba: np.ndarray, y: np.ndarray, n_classes: int) -> float:
    """Mean negative log-likelihood divided by log(n_classes)."""
    if n_classes < 2:
        return 0.0
    p = np.maximum(proba[np.arange(len(y)), y.astype(int)], PROB_FLOOR)
    return float(-np.log(p).mean() / np.log(n_classes))


def _splits(y: np.ndarray, stratify: bool, folds: int, seed: int):
    if stratify and np.unique(y).size > 1 and np.bincount(y.astype(int)).max() >= folds:
        return StratifiedKFold(folds, shuffle=True, random_state=seed).split(np.zeros(len(y)), y)
    return KFold(folds, shuffle=True, random_state=seed).split(np.zeros(len(y)))


def ml_efficacy(
    original: pd.DataFrame,
    synthetic: pd.DataFrame,
    metas: Sequence[ColumnMeta],
    seed: int = 0,
    folds: int = 5,
    mode: str = "prose",
) -> dict[str, dict]:
    """Per-column scores averaged over ``folds`` cross-validation folds.

    Continuous columns get ``g_reg`` = MSE(synth-trained) / MSE(real-trained),
    categorical columns ``g_class`` = |normalised log-loss difference|. In
    ``prose`` mode both models are scored on the real test fold; ``literal``
    mode scores the real-trained model on a synthetic test fold and keeps the
    signed difference.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    x_real = _codes(original, metas)
    x_synth = _codes(synthetic, metas)
    is_cat = np.array([not m.is_continuous for m in metas])
    rng = np.random.default_rng(seed)
    out = {}
    for t, m in enumerate(metas):
        keep = np.arange(len(metas)) != t
        y_real, y_synth = x_real[:, t], x_synth[:, t]
        kind = REGRESSION if m.is_continuous else CLASSIFICATION
        k = 0 if m.is_continuous else len(m.categories)
        synth_folds = list(_splits(y_synth, not m.is_continuous, folds, seed))
        scores = []
        for f, (train, test) in enumerate(_splits(y_real, not m.is_continuous, folds, seed)):
            s_pool, s_test = synth_folds[f]
            take = rng.choice(len(s_pool), size=len(train), replace=len(s_pool) < len(train))
            s_train = s_pool[take]
            fit = dict(kind=kind, categorical=is_cat[keep], n_classes=k or None, seed=seed + f)
            m_real = train_gbdt(x_real[train][:, keep], y_real[train], **fit)
            m_synth = train_gbdt(x_synth[s_train][:, keep], y_synth[s_train], **fit)
            if mode == "prose":
                ref_x, ref_y = x_real[test][:, keep], y_real[test]
            else:
                ref_x, ref_y = x_synth[s_test][:, keep], y_synth[s_test]
            test_x, test_y = x_real[test][:, keep], y_real[test]
            if m.is_continuous:
                num = np.mean((test_y - m_synth.predict(test_x)) ** 2)
                den = np.mean((ref_y - m_real.predict(ref_x)) ** 2)
                scores.append(float((num + 1e-12) / (den + 1e-12)))
            else:
                a = normalized_log_loss(m_synth.predict_proba(test_x), test_y, k)
                b = normalized_log_loss(m_real.predict_proba(ref_x), ref_y, k)
                scores.append(abs(a - b) if mode == "prose" else a - b)
        out[m.name] = {
            "kind": "g_reg" if m.is_continuous else "g_class",
            "score": float(np.mean(scores)),
            "folds": scores,
        }
    return out
