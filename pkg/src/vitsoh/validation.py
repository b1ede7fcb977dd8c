"""Input-validation helpers for array-facing entry points."""

from __future__ import annotations

import numpy as np


def as_float_array(x, *, name: str = "array", ndim: int | None = None,
                   allow_empty: bool = False) -> np.ndarray:
    """Coerce to a float64 ndarray and validate dimensionality/finiteness."""
    arr = np.asarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if not allow_empty and arr.size == 0:
        raise ValueError(f"{name} must not be empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_sample_array(x, *, name: str = "X") -> np.ndarray:
    """Validate a (n_samples, channels, points) stack of sample matrices."""
    arr = as_float_array(x, name=name, ndim=3)
    if arr.shape[1] < 1 or arr.shape[2] < 2:
        raise ValueError(
            f"{name} needs >= 1 channel and >= 2 points, got {arr.shape}")
    return arr


def check_target_vector(y, n_samples: int, *, name: str = "y") -> np.ndarray:
    """Validate a 1-D regression target aligned with n_samples."""
    arr = as_float_array(y, name=name, ndim=1)
    if arr.shape[0] != n_samples:
        raise ValueError(
            f"{name} has {arr.shape[0]} entries for {n_samples} samples")
    return arr
