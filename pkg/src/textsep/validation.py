"""Input validation helpers used at module boundaries.

All check_* functions raise :class:`textsep.errors.InvalidInput` on failure
and otherwise return the (possibly coerced) value, mirroring the
``check_array`` idiom from scikit-learn.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInput


def check_samples(x, name: str = "samples") -> np.ndarray:
    """Coerce to a 1-D float64 array of finite samples."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInput(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise InvalidInput(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains NaN or Inf")
    return arr


def check_sample_rate(sample_rate, name: str = "sample_rate") -> int:
    rate = int(sample_rate)
    if rate != sample_rate or rate <= 0:
        raise InvalidInput(f"{name} must be a positive integer, got {sample_rate!r}")
    return rate


def check_finite_2d(bins, name: str = "bins", dtype=None) -> np.ndarray:
    arr = np.asarray(bins) if dtype is None else np.asarray(bins, dtype=dtype)
    if arr.ndim != 2:
        raise InvalidInput(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains NaN or Inf")
    return arr


def check_same_shape(a, b, name_a: str = "a", name_b: str = "b") -> None:
    if a.shape != b.shape:
        raise InvalidInput(
            f"shape mismatch: {name_a} has {a.shape}, {name_b} has {b.shape}"
        )


def check_positive(value, name: str) -> None:
    if not value > 0:
        raise InvalidInput(f"{name} must be > 0, got {value!r}")


def check_in_range(value, low, high, name: str) -> None:
    if not (low <= value <= high):
        raise InvalidInput(f"{name} must be in [{low}, {high}], got {value!r}")


def check_nonempty_text(text, name: str = "text") -> str:
    if not isinstance(text, str) or not text.strip():
        raise InvalidInput(f"{name} must be a non-empty string")
    return text
