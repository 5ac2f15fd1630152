"""Input validation helpers shared across the pipeline stages."""

from __future__ import annotations

import numpy as np


def check_unit_image(pixels: np.ndarray, name: str = "image") -> np.ndarray:
    """Validate a 2-D intensity array with values in [0, 1].

    Returns the array as float64 without copying when already valid.
    """
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have positive height and width, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    lo, hi = float(arr.min()), float(arr.max())
    if lo < 0.0 or hi > 1.0:
        raise ValueError(f"{name} intensities must lie in [0, 1], got range [{lo}, {hi}]")
    return arr


def check_binary_mask(pixels: np.ndarray, name: str = "mask") -> np.ndarray:
    """Validate a 2-D array whose values are exactly 0 or 1, with at least one 1."""
    arr = np.asarray(pixels)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    values = np.unique(arr)
    if not np.isin(values, (0, 1)).all():
        raise ValueError(f"{name} values must be exactly 0 or 1, got {values[:8]}")
    if arr.sum() == 0:
        raise ValueError(f"{name} must have a non-empty 1-region")
    return arr.astype(np.uint8, copy=False)


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "arrays") -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what} have mismatched shapes: {a.shape} vs {b.shape}")


def check_fraction(value: float, name: str, *, closed_right: bool = False) -> float:
    value = float(value)
    hi_ok = value <= 1.0 if closed_right else value < 1.0
    if not (0.0 < value and hi_ok):
        interval = "(0, 1]" if closed_right else "(0, 1)"
        raise ValueError(f"{name} must lie in {interval}, got {value}")
    return value


def check_positive(value: float, name: str) -> float:
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value


def check_non_negative(value: float, name: str) -> float:
    if value < 0:
        raise ValueError(f"{name} must be non-negative, got {value}")
    return value
