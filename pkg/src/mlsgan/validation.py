"""Input checks shared by the estimator wrapper."""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionError


def check_scene_array(X, n_persons: int | None = None, seq_len: int | None = None,
                      feature_dim: int | None = None) -> np.ndarray:
    """Validate ``X`` of shape ``(n, N + 1, T, d)``; the last slot is the scene.

    Returns a float32 copy. Optional sizes are matched against the fitted ones.
    """
    X = np.asarray(X)
    if X.dtype == object or not np.issubdtype(X.dtype, np.number):
        raise ValueError(f"X must be numeric, got dtype {X.dtype}")
    if X.ndim != 4:
        raise DimensionError(f"X must be 4-D (samples, persons + 1, time, features), got shape {X.shape}")
    n, slots, T, d = X.shape
    if n == 0:
        raise ValueError("X holds zero samples")
    if slots < 2:
        raise DimensionError("X needs at least one person slot plus the scene slot")
    if T < 1 or d < 1:
        raise DimensionError(f"empty time or feature axis in shape {X.shape}")
    expected = (n_persons + 1 if n_persons is not None else None, seq_len, feature_dim)
    for got, want, what in zip((slots, T, d), expected, ("slot", "time", "feature")):
        if want is not None and got != want:
            raise DimensionError(f"X has {got} {what} entries per sample, the model was fitted with {want}")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains NaN or infinity")
    return X.astype(np.float32)


def check_labels(y, n_samples: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(classes, encoded)`` for a 1-D label vector of length ``n_samples``."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise DimensionError(f"y must be 1-D, got shape {y.shape}")
    if len(y) != n_samples:
        raise DimensionError(f"X has {n_samples} samples but y has {len(y)}")
    classes, encoded = np.unique(y, return_inverse=True)
    return classes, encoded.astype(np.int64)


def presence_from_persons(persons: np.ndarray) -> np.ndarray:
    """Mark a slot present unless its whole sequence is exactly zero (the dummy value)."""
    return np.any(persons != 0, axis=(2, 3))
