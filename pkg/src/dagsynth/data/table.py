"""Tables, column metadata and CSV ingestion."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .mixture import MixtureModel, fit_mixture

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


class SchemaError(ValueError):
    """Table contents do not match the expected columns or vocabulary."""


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    kind: str
    categories: tuple | None = None
    mixture: MixtureModel | None = None

    def __post_init__(self):
        if self.kind == CATEGORICAL:
            if not self.categories:
                raise SchemaError(f"{self.name}: categorical column needs categories")
            if len(set(self.categories)) != len(self.categories):
                raise SchemaError(f"{self.name}: duplicate categories")
        elif self.kind != CONTINUOUS:
            raise SchemaError(f"{self.name}: unknown kind {self.kind!r}")

    @property
    def is_continuous(self) -> bool:
        return self.kind == CONTINUOUS

    @property
    def width(self) -> int:
        """Encoded width: 2 * components for continuous, |categories| otherwise."""
        if self.is_continuous:
            return 2 * self.mixture.n_components
        return len(self.categories)


def _py(value):
    return value.item() if isinstance(value, np.generic) else value


def _sorted_unique(series: pd.Series) -> tuple:
    values = [_py(v) for v in pd.unique(series)]
    try:
        return tuple(sorted(values))
    except TypeError:
        return tuple(sorted(values, key=str))


def infer_meta(
    table: pd.DataFrame,
    categorical: Iterable[str] = (),
    seed: int = 0,
    with_mixtures: bool = True,
) -> list[ColumnMeta]:
    """Classify columns and fit mixtures for the continuous ones.

    A column is categorical when it is non-numeric (or boolean) or named in
    ``categorical``; categories are the sorted unique values. Evaluation
    only needs the kinds, so mixture fitting can be skipped.
    """
    if table.shape[1] == 0 or len(table) == 0:
        raise SchemaError("table is empty")
    forced = set(categorical)
    unknown = forced - set(table.columns)
    if unknown:
        raise SchemaError(f"categorical override names unknown columns: {sorted(unknown)}")
    metas = []
    for i, name in enumerate(table.columns):
        col = table[name]
        if col.isna().all():
            raise SchemaError(f"column {name!r} is empty")
        if col.isna().any():
            raise SchemaError(f"column {name!r} has missing values at rows {list(np.flatnonzero(col.isna())[:5])}")
        numeric = pd.api.types.is_numeric_dtype(col) and not pd.api.types.is_bool_dtype(col)
        if numeric and name not in forced:
            mixture = fit_mixture(col.to_numpy(dtype=np.float64), seed=seed + i) if with_mixtures else None
            metas.append(ColumnMeta(str(name), CONTINUOUS, mixture=mixture))
        else:
            metas.append(ColumnMeta(str(name), CATEGORICAL, categories=_sorted_unique(col)))
    return metas


def read_csv(path: str | Path) -> pd.DataFrame:
    return pd.read_csv(path, sep=",", encoding="utf-8", decimal=".")


def write_csv(table: pd.DataFrame, path) -> None:
    table.to_csv(path, index=False, encoding="utf-8")


def read_overrides(path: str | Path | None) -> list[str]:
    if path is None:
        return []
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    names = obj.get("categorical", []) if isinstance(obj, dict) else None
    if not isinstance(names, list):
        raise SchemaError('overrides file must look like {"categorical": [names]}')
    return [str(n) for n in names]


def check_schema(table: pd.DataFrame, metas: Sequence[ColumnMeta], label: str = "table") -> None:
    """Raise ``SchemaError`` on column mismatch or out-of-vocabulary categories."""
    expected = [m.name for m in metas]
    got = [str(c) for c in table.columns]
    if got != expected:
        missing = [c for c in expected if c not in got]
        extra = [c for c in got if c not in expected]
        raise SchemaError(
            f"{label}: columns differ from the original (missing={missing}, extra={extra}"
            + (", order differs" if not missing and not extra else "")
            + ")"
        )
    for m in metas:
        col = table[m.name]
        if m.is_continuous:
            if not pd.api.types.is_numeric_dtype(col) or not np.isfinite(col.to_numpy(dtype=float)).all():
                raise SchemaError(f"{label}: column {m.name!r} must hold finite numbers")
        else:
            vocab = set(m.categories)
            bad = [v for v in pd.unique(col) if _py(v) not in vocab]
            if bad:
                raise SchemaError(f"{label}: column {m.name!r} has unseen categories {bad[:5]}")
