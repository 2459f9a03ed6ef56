"""Column metadata, mixture encoding and decoding."""

from .encoding import (
    STRATEGIES,
    EncodedTable,
    bin_continuous,
    decode_and_sample,
    encode_categorical,
    encode_continuous,
    encode_table,
)
from .mixture import MixtureModel, fit_mixture
from .table import (
    CATEGORICAL,
    CONTINUOUS,
    ColumnMeta,
    SchemaError,
    check_schema,
    infer_meta,
    read_csv,
    read_overrides,
    write_csv,
)

__all__ = [
    "CATEGORICAL",
    "CONTINUOUS",
    "STRATEGIES",
    "ColumnMeta",
    "EncodedTable",
    "MixtureModel",
    "SchemaError",
    "bin_continuous",
    "check_schema",
    "decode_and_sample",
    "encode_categorical",
    "encode_continuous",
    "encode_table",
    "fit_mixture",
    "infer_meta",
    "read_csv",
    "read_overrides",
    "write_csv",
]
