"""Statistical and supervised-learning comparison of synthetic tables."""

from .efficacy import ml_efficacy, normalized_log_loss
from .gbdt import CLASSIFICATION, REGRESSION, GbdtModel, train_gbdt
from .stats import METRICS, compare, frequency_list, statistical_report

__all__ = [
    "CLASSIFICATION",
    "METRICS",
    "REGRESSION",
    "GbdtModel",
    "compare",
    "frequency_list",
    "ml_efficacy",
    "normalized_log_loss",
    "statistical_report",
    "train_gbdt",
]
