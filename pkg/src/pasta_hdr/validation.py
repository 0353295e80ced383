"""Argument checks shared by the estimator API and the CLI."""

from __future__ import annotations

import numpy as np


def check_stack_array(X, name: str = "X") -> np.ndarray:
    """Return ``X`` as float32 ``[n, 3, 6, H, W]``; a single stack ``[3, 6, H, W]`` is promoted."""
    arr = np.asarray(X, dtype=np.float32)
    if arr.ndim == 4:
        arr = arr[None]
    if arr.ndim != 5 or arr.shape[1:3] != (3, 6):
        raise ValueError(f"{name} must have shape [n, 3, 6, H, W], got {np.shape(X)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_hdr_array(y, name: str = "y") -> np.ndarray:
    """Return ``y`` as float32 ``[n, 3, H, W]``."""
    arr = np.asarray(y, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[1] != 3:
        raise ValueError(f"{name} must have shape [n, 3, H, W], got {np.shape(y)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_consistent(X: np.ndarray, y: np.ndarray) -> None:
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} samples but y has {y.shape[0]}")
    if X.shape[-2:] != y.shape[-2:]:
        raise ValueError(f"X is {X.shape[-2:]} but y is {y.shape[-2:]}")


def check_ldr_frames(frames, name: str = "frames") -> np.ndarray:
    """``[n, 3, 3, H, W]`` LDR frames in [0, 1]."""
    arr = np.asarray(frames, dtype=np.float32)
    if arr.ndim == 4:
        arr = arr[None]
    if arr.ndim != 5 or arr.shape[1:3] != (3, 3):
        raise ValueError(f"{name} must have shape [n, 3, 3, H, W], got {np.shape(frames)}")
    if arr.size and (arr.min() < 0 or arr.max() > 1):
        raise ValueError(f"{name} must lie in [0, 1]")
    return arr


def check_positive_int(value, name: str) -> int:
    if isinstance(value, bool) or int(value) != value or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)
