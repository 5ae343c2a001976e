"""Shared input validation helpers."""

import numpy as np


def as_matrix(x, name: str, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Coerce `x` to a 2-D float array, optionally enforcing its shape."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got ndim={arr.ndim}")
    if rows is not None and arr.shape[0] != rows:
        raise ValueError(f"{name} must have {rows} rows, got {arr.shape[0]}")
    if cols is not None and arr.shape[1] != cols:
        raise ValueError(f"{name} must have {cols} columns, got {arr.shape[1]}")
    return arr


def as_vector(x, name: str, size: int | None = None) -> np.ndarray:
    """Coerce `x` to a 1-D float array, optionally enforcing its length."""
    arr = np.asarray(x, dtype=float).reshape(-1)
    if size is not None and arr.size != size:
        raise ValueError(f"{name} must have length {size}, got {arr.size}")
    return arr


def as_signal(x, name: str, width: int | None = None) -> np.ndarray:
    """Coerce a time series to shape (T, d).

    Accepts a 1-D sequence (treated as scalar-valued, d = 1) or a 2-D
    array with one row per time step.
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 1-D or 2-D, got ndim={arr.ndim}")
    if arr.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if width is not None and arr.shape[1] != width:
        raise ValueError(f"{name} must have {width} channels, got {arr.shape[1]}")
    return arr


def require_positive_int(value: int, name: str) -> int:
    if int(value) != value or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)
