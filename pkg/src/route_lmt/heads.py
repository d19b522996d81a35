"""Linear scoring heads: weights, input standardization, prediction.

A head maps an exported feature vector to a scalar via
``w . (phi - mean) / scale + bias``. The `target` field records whether
that scalar is a predicted marginal gain or a predicted small-model
quality; polarity handling (quality predictions route bottom-p) lives in
the scorer layer, not here.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DimensionMismatchError, DomainError

SCALE_FLOOR = 1e-12


class Target(Enum):
    """Learning target the head was fit against."""

    GAIN = "gain"
    QUALITY = "quality"


@dataclass(frozen=True)
class LinearHead:
    weights: tuple[float, ...]
    bias: float
    target: Target
    feature_mean: tuple[float, ...]
    feature_scale: tuple[float, ...]
    ridge_lambda: float = 0.0
    train_fingerprint: str = ""

    def __post_init__(self) -> None:
        for name in ("weights", "feature_mean", "feature_scale"):
            object.__setattr__(
                self, name, tuple(float(x) for x in getattr(self, name))
            )
        if not (len(self.weights) == len(self.feature_mean) == len(self.feature_scale)):
            raise DomainError(
                "weights, feature_mean and feature_scale must share one dimension"
            )
        if any(s < SCALE_FLOOR for s in self.feature_scale):
            raise DomainError(f"feature_scale entries must be >= {SCALE_FLOOR}")
        if self.ridge_lambda < 0:
            raise DomainError("ridge_lambda must be >= 0")

    @property
    def dim(self) -> int:
        return len(self.weights)

    def predict(self, features: tuple[float, ...] | list[float]) -> float:
        """Raw prediction for one feature vector (gain or quality units)."""
        if len(features) != self.dim:
            raise DimensionMismatchError(
                f"feature vector has dim {len(features)}, head expects {self.dim}"
            )
        phi = (np.asarray(features, dtype=float) - np.asarray(self.feature_mean)) / (
            np.asarray(self.feature_scale)
        )
        return float(phi @ np.asarray(self.weights) + self.bias)

    def predict_many(self, features: np.ndarray) -> np.ndarray:
        """Vectorized predictions for an (n, dim) feature matrix."""
        if features.ndim != 2 or features.shape[1] != self.dim:
            raise DimensionMismatchError(
                f"feature matrix has shape {features.shape}, head expects (n, {self.dim})"
            )
        phi = (features - np.asarray(self.feature_mean)) / np.asarray(self.feature_scale)
        return phi @ np.asarray(self.weights) + self.bias

    def effective_coefficients(self) -> tuple[tuple[float, ...], float]:
        """Equivalent (weights, intercept) acting on raw, unstandardized features."""
        w = np.asarray(self.weights) / np.asarray(self.feature_scale)
        intercept = self.bias - float(np.asarray(self.feature_mean) @ w)
        return tuple(float(x) for x in w), intercept
