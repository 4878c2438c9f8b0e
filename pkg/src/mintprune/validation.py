"""Input validation helpers, in the spirit of sklearn's check_array."""

from __future__ import annotations

import numpy as np

from .exceptions import InsufficientSamplesError, ShapeError


def check_sample_matrix(X, min_rows: int = 1, name: str = "samples") -> np.ndarray:
    """Coerce to a 2-D float64 array of finite values.

    Raises InsufficientSamplesError when fewer than min_rows rows are present
    and ShapeError for non-2-D or non-finite input.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={X.ndim}")
    if X.shape[0] < min_rows:
        raise InsufficientSamplesError(
            f"{name} needs at least {min_rows} rows, got {X.shape[0]}"
        )
    if X.shape[1] < 1:
        raise ShapeError(f"{name} needs at least one column")
    if not np.all(np.isfinite(X)):
        raise ShapeError(f"{name} contains NaN or Inf entries")
    return X


def check_same_rows(a: np.ndarray, b: np.ndarray, names=("a", "b")) -> None:
    if a.shape[0] != b.shape[0]:
        raise ShapeError(
            f"{names[0]} has {a.shape[0]} rows but {names[1]} has {b.shape[0]}"
        )


def check_rng(seed) -> np.random.Generator:
    """Accept an int seed or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
