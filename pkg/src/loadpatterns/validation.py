"""Input validation helpers used by the estimators and functional ops."""

from __future__ import annotations

import numpy as np

from .errors import LengthMismatchError

HOURS_PER_DAY = 24


def as_float_matrix(X, n_cols: int | None = None, name: str = "X") -> np.ndarray:
    """Coerce to a 2-D float64 array, checking finiteness and column count."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if n_cols is not None and arr.shape[1] != n_cols:
        raise ValueError(f"{name} must have {n_cols} columns, got {arr.shape[1]}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains NaN or infinity")
    return arr


def as_float_vector(x, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains NaN or infinity")
    return arr


def as_profile_matrix(X, name: str = "profiles") -> np.ndarray:
    """Validate a stack of daily profiles: 2-D, 24 columns, finite."""
    return as_float_matrix(X, n_cols=HOURS_PER_DAY, name=name)


def check_same_length(a, b, what: str = "inputs") -> None:
    if len(a) != len(b):
        raise LengthMismatchError(f"{what} have lengths {len(a)} and {len(b)}")


def as_label_array(values, name: str = "values") -> np.ndarray:
    """Coerce discrete values to a 1-D array usable as contingency labels."""
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    return arr
