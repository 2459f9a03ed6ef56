"""Gradient-boosted tree surrogate used by the ML-efficacy score."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.ensemble import HistGradientBoostingClassifier, HistGradientBoostingRegressor

REGRESSION = "regression"
CLASSIFICATION = "probabilistic_classification"
MAX_NATIVE_CATEGORIES = 255  # sklearn's limit for native categorical splits


@dataclass
class GbdtModel:
    kind: str
    n_classes: int = 0
    estimator: object | None = None
    constant: np.ndarray | float | None = None  # degenerate fit

    def predict(self, features: np.ndarray) -> np.ndarray:
        n = len(features)
        if self.kind == REGRESSION:
            if self.estimator is None:
                return np.full(n, float(self.constant))
            return self.estimator.predict(features)
        return self.predict_proba(features).argmax(axis=1)

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        """Probabilities over class codes 0..n_classes-1 (unseen classes get 0)."""
        if self.kind != CLASSIFICATION:
            raise TypeError("predict_proba needs a classification model")
        if self.estimator is None:
            return np.tile(self.constant, (len(features), 1))
        out = np.zeros((len(features), self.n_classes))
        out[:, self.estimator.classes_.astype(int)] = self.estimator.predict_proba(features)
        return out


def train_gbdt(
    features: np.ndarray,
    targets: np.ndarray,
    kind: str,
    categorical: np.ndarray | None = None,
    n_classes: int | None = None,
    seed: int = 0,
    max_depth: int = 6,
    learning_rate: float = 0.1,
    max_rounds: int = 500,
    patience: int = 20,
) -> GbdtModel:
    """Fit a tree ensemble with early stopping on a 20% validation split.

    ``categorical`` flags integer-coded columns handled natively by the
    splits. Class targets must be codes in ``[0, n_classes)``.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets)
    if categorical is not None:
        categorical = np.asarray(categorical, dtype=bool).copy()
        # very wide vocabularies fall back to ordinal codes
        for j in np.flatnonzero(categorical):
            if x.shape[0] and x[:, j].max() >= MAX_NATIVE_CATEGORIES:
                categorical[j] = False
        if not categorical.any():
            categorical = None
    params = dict(
        max_depth=max_depth,
        learning_rate=learning_rate,
        max_iter=max_rounds,
        early_stopping=True,
        validation_fraction=0.2,
        n_iter_no_change=patience,
        categorical_features=categorical,
        random_state=seed,
    )
    if kind == REGRESSION:
        y = y.astype(np.float64)
        if np.ptp(y) == 0:
            return GbdtModel(kind, constant=float(y[0]))
        return GbdtModel(kind, estimator=HistGradientBoostingRegressor(**params).fit(x, y))
    if kind != CLASSIFICATION:
        raise ValueError(f"unknown model kind {kind!r}")
    y = y.astype(np.int64)
    k = int(n_classes if n_classes is not None else y.max() + 1)
    present = np.unique(y)
    if present.size == 1:
        proba = np.zeros(k)
        proba[present[0]] = 1.0
        return GbdtModel(kind, k, constant=proba)
    return GbdtModel(kind, k, estimator=HistGradientBoostingClassifier(**params).fit(x, y))
