"""scikit-learn style wrapper around training and inference."""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .codes import denormalize
from .data import Dataset
from .models import ModelConfig
from .training import TrainConfig, TrainedModel, generated_codes, predict_proba, train
from .validation import check_labels, check_scene_array, presence_from_persons


def _dataset(X: np.ndarray, labels: np.ndarray, k: int) -> Dataset:
    persons, scene = X[:, :-1], X[:, -1]
    mask = presence_from_persons(persons)
    individual = np.full(mask.shape, -1, dtype=np.int64)
    return Dataset(np.ascontiguousarray(persons), np.ascontiguousarray(scene), mask, labels, individual, k)


class MLSGANClassifier(ClassifierMixin, BaseEstimator):
    """Group activity classifier trained with the multi-level sequence GAN.

    ``X`` has shape ``(n_samples, N + 1, T, d)``: ``N`` person slots (all-zero
    sequences mark absent people) followed by the scene sequence.
    ``transform`` returns the generated action codes on the 0-255 scale.

    Parameters mirror :class:`TrainConfig` and :class:`ModelConfig`;
    ``random_state`` seeds initialisation, shuffling and noise.
    """

    def __init__(self, variant: str = "mls_gan", hidden: int = 300, z_dim: int = 16,
                 fused: Optional[int] = None, epochs: int = 50, batch_size: int = 32,
                 lambda_c: float = 2.5, lr: float = 1e-3, dtype: str = "float64",
                 random_state: int = 0):
        self.variant = variant
        self.hidden = hidden
        self.z_dim = z_dim
        self.fused = fused
        self.epochs = epochs
        self.batch_size = batch_size
        self.lambda_c = lambda_c
        self.lr = lr
        self.dtype = dtype
        self.random_state = random_state

    def fit(self, X, y) -> "MLSGANClassifier":
        X = check_scene_array(X)
        self.classes_, encoded = check_labels(y, X.shape[0])
        _, slots, T, d = X.shape
        self.n_persons_ = slots - 1
        self.seq_len_ = T
        self.n_features_ = d
        model_config = ModelConfig(self.n_persons_, T, d, len(self.classes_), hidden=self.hidden,
                                   z_dim=self.z_dim, fused=self.fused, dtype=self.dtype)
        train_config = TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lambda_c=self.lambda_c,
                                   lr=self.lr, seed=int(self.random_state), variant=self.variant,
                                   eval_every=max(1, self.epochs))
        model, _ = train(_dataset(X, encoded, len(self.classes_)), train_config, model_config)
        self.model_: TrainedModel = model
        self.history_ = list(model.history)
        return self

    def _checked(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        return check_scene_array(X, self.n_persons_, self.seq_len_, self.n_features_)

    def predict_proba(self, X) -> np.ndarray:
        X = self._checked(X)
        return predict_proba(self.model_, X[:, :-1], X[:, -1])

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]

    def transform(self, X) -> np.ndarray:
        """Generated action codes ``(n_samples, k)`` on the 0-255 scale, with ``z = 0``."""
        X = self._checked(X)
        labels = np.zeros(len(X), dtype=np.int64)
        codes = generated_codes(self.model_, _dataset(X, labels, len(self.classes_)))
        return denormalize(codes)
