"""Action codes: length-k vectors in [0, 255] standing for a group activity.

Networks work with the normalised form in [0, 1]; files and reports use the
0-255 form. Ground-truth codes are scaled one-hot vectors.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ContractError

CODE_MAX = 255.0
_RANGE_TOL = 1e-9


def encode_ground_truth(class_id: int, k: int) -> np.ndarray:
    """Code with 255 at ``class_id`` and 0 elsewhere."""
    if k < 1:
        raise ContractError(f"k must be positive, got {k}")
    if not 0 <= class_id < k:
        raise ContractError(f"class id {class_id} outside [0, {k})")
    code = np.zeros(k, dtype=np.float64)
    code[class_id] = CODE_MAX
    return code


def encode_batch(labels, k: int) -> np.ndarray:
    """Normalised ground-truth codes, one row per label."""
    labels = np.asarray(labels, dtype=np.int64)
    if np.any(labels < 0) or np.any(labels >= k):
        raise ContractError(f"labels must lie in [0, {k})")
    return np.eye(k, dtype=np.float64)[labels]


def decode(code) -> int:
    """Index of the largest entry; ties go to the lowest index."""
    return int(np.argmax(np.asarray(code)))


def validate(code) -> np.ndarray:
    arr = np.asarray(code, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise ContractError(f"an action code is a non-empty vector, got shape {arr.shape}")
    if np.any(~np.isfinite(arr)) or arr.min() < -_RANGE_TOL or arr.max() > CODE_MAX + _RANGE_TOL:
        raise ContractError("action code values must lie in [0, 255]")
    return arr


def normalize(code) -> np.ndarray:
    arr = np.asarray(code, dtype=np.float64)
    if np.any(~np.isfinite(arr)) or arr.min(initial=0.0) < -_RANGE_TOL or arr.max(initial=0.0) > CODE_MAX + _RANGE_TOL:
        raise ContractError("action code values must lie in [0, 255]")
    return arr / CODE_MAX


def denormalize(internal) -> np.ndarray:
    arr = np.asarray(internal, dtype=np.float64)
    if np.any(~np.isfinite(arr)) or arr.min(initial=0.0) < -_RANGE_TOL or arr.max(initial=0.0) > 1.0 + _RANGE_TOL:
        raise ContractError("normalised code values must lie in [0, 1]")
    return arr * CODE_MAX
