"""Input validation helpers shared across the package."""

import numbers

import numpy as np


def check_cloud(points, name="cloud", allow_empty=False):
    """Return ``points`` as a finite float64 array of shape (n, 3).

    Raises
    ------
    ValueError
        If the array is not (n, 3), is empty (unless ``allow_empty``), or
        holds non-finite coordinates.
    """
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1 and arr.shape[0] == 3:
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name} must have shape (n, 3), got {arr.shape}")
    if arr.shape[0] == 0 and not allow_empty:
        raise ValueError(f"{name} must contain at least one point")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return arr


def check_clouds(X, name="X"):
    """Return a batch of equally sized clouds as a float64 (b, n, 3) array."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name} must have shape (n_clouds, n_points, 3), got {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return arr


def check_class_id(value, n_classes, name="target"):
    if not isinstance(value, numbers.Integral) or isinstance(value, bool):
        raise TypeError(f"{name} must be an integer class id, got {value!r}")
    if not 0 <= value < n_classes:
        raise ValueError(f"{name}={value} out of range for {n_classes} classes")
    return int(value)
