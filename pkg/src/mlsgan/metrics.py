"""Confusion matrix, multi-class accuracy (MCA) and mean per-class accuracy (MPCA)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContractError


def confusion_matrix(y_true, y_pred, k: int) -> np.ndarray:
    """Count matrix with true classes on rows."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ContractError("y_true and y_pred differ in length")
    if y_true.size and (min(y_true.min(), y_pred.min()) < 0 or max(y_true.max(), y_pred.max()) >= k):
        raise ContractError(f"labels must lie in [0, {k})")
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def _check(confusion) -> np.ndarray:
    cm = np.asarray(confusion)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ContractError(f"confusion matrix must be square, got {cm.shape}")
    if np.any(cm < 0):
        raise ContractError("confusion matrix entries must be non-negative")
    return cm


def mca(confusion) -> float:
    cm = _check(confusion)
    total = cm.sum()
    if total == 0:
        raise ContractError("empty confusion matrix")
    return float(np.trace(cm) / total)


def mpca(confusion) -> float:
    """Mean of per-class recalls; classes absent from the truth are skipped."""
    cm = _check(confusion)
    rows = cm.sum(axis=1)
    present = rows > 0
    if not present.any():
        raise ContractError("empty confusion matrix")
    if not present.all():
        warnings.warn(
            f"classes {np.flatnonzero(~present).tolist()} have no samples; excluded from MPCA",
            stacklevel=2,
        )
    recalls = np.diag(cm)[present] / rows[present]
    return float(recalls.mean())


@dataclass
class MetricsReport:
    confusion: np.ndarray
    mca: float
    mpca: float
    d_losses: list[float] = field(default_factory=list)
    g_losses: list[float] = field(default_factory=list)

    @classmethod
    def from_predictions(cls, y_true, y_pred, k: int, **curves) -> "MetricsReport":
        cm = confusion_matrix(y_true, y_pred, k)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            per_class = mpca(cm)
        return cls(cm, mca(cm), per_class, **curves)

    def to_text(self) -> str:
        lines = [f"MCA {self.mca:.6f}", f"MPCA {self.mpca:.6f}", "confusion (rows = true class)"]
        lines += [" ".join(str(int(v)) for v in row) for row in self.confusion]
        return "\n".join(lines) + "\n"
