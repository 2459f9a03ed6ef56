"""Mixture models for continuous columns with automatic component pruning."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from sklearn.exceptions import ConvergenceWarning
from sklearn.mixture import BayesianGaussianMixture

SIGMA_FLOOR = 1e-6
MAX_COMPONENTS = 10
WEIGHT_THRESHOLD = 0.01
SAMPLE_SIZE = 2000


@dataclass(frozen=True)
class MixtureModel:
    means: np.ndarray
    stds: np.ndarray
    weights: np.ndarray
    delta: float = 2.0

    def __post_init__(self):
        k = len(self.means)
        if not 1 <= k <= MAX_COMPONENTS:
            raise ValueError(f"component count {k} outside [1, {MAX_COMPONENTS}]")
        if len(self.stds) != k or len(self.weights) != k:
            raise ValueError("means, stds and weights must have equal length")
        if (self.stds <= 0).any():
            raise ValueError("standard deviations must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")

    @property
    def n_components(self) -> int:
        return len(self.means)

    def log_joint(self, values: np.ndarray) -> np.ndarray:
        z = (values[:, None] - self.means[None, :]) / self.stds[None, :]
        return (
            np.log(self.weights)[None, :]
            - 0.5 * z * z
            - np.log(self.stds)[None, :]
            - 0.5 * np.log(2 * np.pi)
        )

    def posterior(self, values: np.ndarray) -> np.ndarray:
        """Responsibilities p[i, k] of component k for each value (rows sum to 1)."""
        lj = self.log_joint(np.asarray(values, dtype=np.float64))
        return np.exp(lj - logsumexp(lj, axis=1, keepdims=True))


def _fit_vgm(sample: np.ndarray, n_components: int, seed: int) -> BayesianGaussianMixture:
    model = BayesianGaussianMixture(
        n_components=n_components,
        weight_concentration_prior_type="dirichlet_process",
        weight_concentration_prior=1e-3,
        max_iter=200,
        tol=1e-6,
        n_init=1,
        random_state=seed,
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        model.fit(sample.reshape(-1, 1))
    return model


def _to_mixture(model: BayesianGaussianMixture, delta: float) -> MixtureModel:
    weights = np.asarray(model.weights_, dtype=np.float64)
    means = model.means_.reshape(-1).astype(np.float64)
    stds = np.sqrt(model.covariances_.reshape(-1)).astype(np.float64)
    order = np.argsort(means, kind="stable")
    weights = weights[order] / weights[order].sum()
    return MixtureModel(means[order], np.maximum(stds[order], SIGMA_FLOOR), weights, delta)


def fit_mixture(
    values,
    seed: int = 0,
    *,
    max_components: int = MAX_COMPONENTS,
    weight_threshold: float = WEIGHT_THRESHOLD,
    sample_size: int = SAMPLE_SIZE,
    delta: float = 2.0,
) -> MixtureModel:
    """Fit a variational Gaussian mixture, shrinking the component count.

    Starting from ``max_components``, repeatedly fit on a random sample and
    shrink to min(#distinct predicted classes, #weights >= threshold) until
    neither count falls below the current number; then refit on all values.
    """
    c = np.asarray(values, dtype=np.float64).reshape(-1)
    if c.size == 0:
        raise ValueError("cannot fit a mixture to an empty column")
    if not np.isfinite(c).all():
        raise ValueError(f"non-finite value at row {int(np.flatnonzero(~np.isfinite(c))[0])}")
    distinct = np.unique(c)
    if distinct.size == 1:
        return MixtureModel(distinct.copy(), np.array([SIGMA_FLOOR]), np.array([1.0]), delta)

    rng = np.random.default_rng(seed)
    n_modes = min(max_components, distinct.size)
    while True:
        size = min(sample_size, c.size)
        sample = c[rng.choice(c.size, size=size, replace=False)]
        model = _fit_vgm(sample, n_modes, seed)
        n_pred = np.unique(model.predict(sample.reshape(-1, 1))).size
        n_weights = int((model.weights_ >= weight_threshold).sum())
        if n_pred < n_modes or n_weights < n_modes:
            n_modes = max(1, min(n_pred, n_weights))
        else:
            break
    return _to_mixture(_fit_vgm(c, n_modes, seed), delta)
