"""Input validation helpers shared by the estimators, operators, and CLI."""

from __future__ import annotations

import numpy as np

__all__ = [
    "check_images",
    "check_labels",
    "require",
]


def require(condition: bool, message: str) -> None:
    """Raise ValueError(message) unless condition holds."""
    if not condition:
        raise ValueError(message)


def check_images(X, *, name: str = "X") -> np.ndarray:
    """Coerce X to a float32 (N, C, H, W) image batch.

    Accepts (N, C, H, W) or single-channel (N, H, W) input. Values must be
    finite; a copy is made only when dtype or layout conversion is needed.
    """
    arr = np.asarray(X)
    if arr.ndim == 3:
        arr = arr[:, None, :, :]
    if arr.ndim != 4:
        raise ValueError(
            f"{name} must have shape (N, C, H, W) or (N, H, W), got ndim={arr.ndim}"
        )
    if arr.shape[0] == 0:
        raise ValueError(f"{name} is empty (N=0)")
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_labels(y, n_samples: int | None = None, class_count: int | None = None,
                 *, name: str = "y") -> np.ndarray:
    """Coerce y to a 1-D int64 label vector, optionally range-checking it."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got ndim={arr.ndim}")
    if not np.issubdtype(arr.dtype, np.integer):
        rounded = np.rint(np.asarray(arr, dtype=np.float64))
        if not np.array_equal(rounded, np.asarray(arr, dtype=np.float64)):
            raise ValueError(f"{name} must contain integer class labels")
        arr = rounded
    arr = arr.astype(np.int64)
    if n_samples is not None and arr.shape[0] != n_samples:
        raise ValueError(
            f"{name} length {arr.shape[0]} does not match sample count {n_samples}"
        )
    if class_count is not None:
        if arr.size and (arr.min() < 0 or arr.max() >= class_count):
            bad = int(arr[(arr < 0) | (arr >= class_count)][0])
            raise ValueError(
                f"{name} contains label {bad} outside [0, {class_count})"
            )
    return arr
