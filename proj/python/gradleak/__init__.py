"""Label leakage from projection-layer gradient updates."""

from ._gradleak import (
    AssumptionViolated,
    DegenerateUpdate,
    DimensionError,
    Error,
    InvalidArgument,
    NotSingleSample,
    grad_drop,
    idlg,
    min_column,
    rlg_attack,
    set_score,
    sign_sgd,
    simulate,
    singular_values,
    wer,
)

__all__ = [
    "AssumptionViolated",
    "DegenerateUpdate",
    "DimensionError",
    "Error",
    "InvalidArgument",
    "NotSingleSample",
    "grad_drop",
    "idlg",
    "min_column",
    "rlg_attack",
    "set_score",
    "sign_sgd",
    "simulate",
    "singular_values",
    "wer",
]
