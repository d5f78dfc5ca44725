"""Small input-checking helpers shared across modules."""

from __future__ import annotations

import numpy as np


def as_points(X, dim: int | None = None, name: str = "X") -> np.ndarray:
    """Coerce ``X`` to a finite float array of shape (n, dim).

    A 1-D input is read as a single point. Zero rows are allowed, which is
    why this does not go through ``sklearn.utils.check_array``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"{name} must be 1-D or 2-D, got shape {X.shape}")
    if dim is not None and X.shape[1] != dim:
        raise ValueError(f"{name} has dimension {X.shape[1]}, expected {dim}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def as_point(a, dim: int | None = None, name: str = "a") -> np.ndarray:
    a = np.asarray(a, dtype=float).reshape(-1)
    if dim is not None and a.shape[0] != dim:
        raise ValueError(f"{name} has dimension {a.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


def as_series(values, name: str = "values", min_len: int = 0) -> np.ndarray:
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.shape[0] < min_len:
        raise ValueError(f"{name} needs at least {min_len} entries, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite values")
    return v


def check_probability(p: float, name: str = "p") -> float:
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"{name} must lie strictly between 0 and 1, got {p}")
    return p


def check_positive(value: float, name: str) -> float:
    value = float(value)
    if not value > 0.0 or not np.isfinite(value):
        raise ValueError(f"{name} must be positive and finite, got {value}")
    return value
