"""L2-regularized logistic regression via full-batch gradient descent.

Deliberately small: the forecasting comparison is about the feature signal,
not the architecture, so a deterministic linear model is the right tool.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from forager.errors import DimensionMismatch

DEFAULT_EPOCHS = 300
DEFAULT_LR = 0.5
DEFAULT_L2 = 1e-4


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray
    bias: float
    loss_trace: tuple[float, ...]

    def decision(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.weights.shape[0]:
            raise DimensionMismatch(
                f"model expects dimension {self.weights.shape[0]}, got {X.shape[1]}")
        return X @ self.weights + self.bias

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.decision(X))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # tanh form is stable for large |z|
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def loss_and_grad(
    weights: np.ndarray, bias: float, X: np.ndarray, y: np.ndarray, l2: float,
) -> tuple[float, np.ndarray, float]:
    """Mean logistic loss with L2 penalty on weights, and its exact gradient.

    y must be +/-1. The bias is not regularized.
    """
    z = X @ weights + bias
    margins = y * z
    loss = float(np.mean(np.logaddexp(0.0, -margins))
                 + 0.5 * l2 * float(weights @ weights))
    # d/dz logaddexp(0, -y z) = -y * sigmoid(-y z)
    coeff = -y * _sigmoid(-margins) / X.shape[0]
    grad_w = X.T @ coeff + l2 * weights
    grad_b = float(np.sum(coeff))
    return loss, grad_w, grad_b


def train_logistic(
    train: Sequence[tuple[np.ndarray, bool]],
    epochs: int = DEFAULT_EPOCHS,
    lr: float = DEFAULT_LR,
    l2: float = DEFAULT_L2,
    seed: int = 0,
) -> LogisticModel:
    """Full-batch gradient descent; the returned loss trace includes the
    initial loss, so it has epochs + 1 entries."""
    if not train:
        raise DimensionMismatch("cannot train on an empty set")
    dims = {v.shape for v, _ in train}
    if len(dims) != 1 or len(next(iter(dims))) != 1:
        raise DimensionMismatch(f"inconsistent feature shapes: {sorted(dims)}")
    X = np.stack([np.asarray(v, dtype=float) for v, _ in train])
    y = np.array([1.0 if t else -1.0 for _, t in train])
    rng = np.random.default_rng(seed)
    weights = rng.normal(scale=0.01, size=X.shape[1])
    bias = 0.0
    trace: list[float] = []
    for _ in range(epochs):
        loss, grad_w, grad_b = loss_and_grad(weights, bias, X, y, l2)
        trace.append(loss)
        weights = weights - lr * grad_w
        bias = bias - lr * grad_b
    final_loss, _, _ = loss_and_grad(weights, bias, X, y, l2)
    trace.append(final_loss)
    return LogisticModel(weights=weights, bias=bias, loss_trace=tuple(trace))
