"""Input validation helpers for the estimator API."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def check_images(X, image_size: int) -> np.ndarray:
    """Coerce X to a finite (n, 3, S, S) float64 batch or raise."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4 or X.shape[1] != 3:
        raise ShapeError(f"expected images shaped (n, 3, S, S), got {X.shape}")
    if X.shape[2] != image_size or X.shape[3] != image_size:
        raise ShapeError(
            f"images are {X.shape[2]}x{X.shape[3]}, model expects "
            f"{image_size}x{image_size}"
        )
    if not np.all(np.isfinite(X)):
        raise ShapeError("images contain non-finite values")
    return np.ascontiguousarray(X)


def check_points(name: str, arr, n: int, rows: int, cols: int) -> np.ndarray:
    """Coerce a per-sample point array to (n, rows, cols) float64 or raise."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.shape != (n, rows, cols):
        raise ShapeError(
            f"{name} must be shaped ({n}, {rows}, {cols}), got {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name} contains non-finite values")
    return np.ascontiguousarray(arr)
