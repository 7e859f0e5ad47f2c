"""Input validation helpers shared by the estimators."""

import numbers

import numpy as np


def as_rows(X, *, dtype=np.float64, name="X"):
    """Return a finite 2-D array view of ``X``.

    Accepts an :class:`~condfilter.data.EmbeddingSet`, a 2-D array-like, or a
    1-D array-like (treated as a single feature column).
    """
    data = getattr(X, "data", X)
    arr = np.asarray(data, dtype=dtype)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains NaN or infinite values")
    return arr


def labels_of(X, y=None, *, name="labels"):
    if y is None:
        y = getattr(X, "labels", None)
    if y is None:
        raise ValueError(f"{name} are required")
    return np.asarray(y, dtype=np.int64)


def check_same_dim(a, b, what="rows"):
    if a.shape[1] != b.shape[1]:
        raise ValueError(
            f"dimension mismatch: {what} have dim {a.shape[1]}, expected {b.shape[1]}"
        )


def check_positive_int(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_seed(seed):
    if seed is None:
        return 0
    if isinstance(seed, bool) or not isinstance(seed, numbers.Integral) or seed < 0:
        raise ValueError(f"seed must be a nonnegative integer, got {seed!r}")
    if seed >= 2**64:
        raise ValueError("seed must fit in 64 bits")
    return int(seed)
