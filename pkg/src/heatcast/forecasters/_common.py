from __future__ import annotations

import numpy as np

from ..features import FeatureMatrix


class ColumnMismatchError(ValueError):
    pass


def as_design(X, y=None, column_names=None):
    """Normalise ``FeatureMatrix`` or raw arrays to ``(values, target, names)``."""
    if isinstance(X, FeatureMatrix):
        return X.values, X.target if y is None else np.asarray(y, float), X.column_names
    values = np.atleast_2d(np.asarray(X, dtype=float))
    if y is None:
        raise ValueError("raw arrays need an explicit target")
    if column_names is None:
        column_names = tuple(f"x{j}" for j in range(values.shape[1]))
    return values, np.asarray(y, dtype=float), tuple(column_names)


def check_columns(X, expected: tuple[str, ...]) -> np.ndarray:
    if isinstance(X, FeatureMatrix):
        if tuple(X.column_names) != tuple(expected):
            raise ColumnMismatchError(f"columns {X.column_names} do not match training columns {expected}")
        return X.values
    values = np.atleast_2d(np.asarray(X, dtype=float))
    if values.shape[1] != len(expected):
        raise ColumnMismatchError(f"expected {len(expected)} columns, got {values.shape[1]}")
    return values
