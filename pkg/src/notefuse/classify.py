"""Patient-level aggregation and the frozen-representation mortality probe.

Representation learning is label-free; mortality prediction is a
downstream logistic probe fit on frozen patient vectors, one classifier
per horizon. The fit is full-batch Newton (IRLS) on the summed
cross-entropy plus an L2 penalty on the weights (bias unpenalized),
which is deterministic and seed-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def patient_representation(note_vectors) -> np.ndarray:
    """Arithmetic mean of a patient's note vectors."""
    vectors = list(note_vectors)
    if not vectors:
        raise ValueError("patient has no note representations to aggregate")
    return np.mean(np.stack(vectors), axis=0)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def logistic_objective(w_full: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float) -> float:
    """Summed cross-entropy + 0.5*l2*||weights||^2 with w_full = [weights, bias]."""
    z = X @ w_full[:-1] + w_full[-1]
    ce = np.sum(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z))))
    return float(ce + 0.5 * l2 * np.dot(w_full[:-1], w_full[:-1]))


@dataclass
class MortalityClassifier:
    weights: np.ndarray
    bias: float
    horizon: str

    def decision(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X) @ self.weights + self.bias

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.decision(X))


def fit_classifier(
    train_reps,
    labels,
    horizon: str,
    l2: float = 1.0,
    max_iter: int = 100,
    tol: float = 1e-10,
) -> MortalityClassifier:
    """Newton/IRLS logistic regression on frozen representations.

    Raises if the training labels contain a single class (the probe
    would be degenerate).
    """
    X = np.asarray(train_reps, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"shape mismatch: reps {X.shape}, labels {y.shape}")
    if len(np.unique(y)) < 2:
        raise ValueError("training labels contain a single class")
    if l2 < 0:
        raise ValueError(f"l2 must be non-negative, got {l2}")

    n, p = X.shape
    Xb = np.hstack([X, np.ones((n, 1))])
    w = np.zeros(p + 1)
    reg = np.full(p + 1, l2)
    reg[-1] = 0.0  # bias unpenalized
    for _ in range(max_iter):
        z = Xb @ w
        prob = _sigmoid(z)
        grad = Xb.T @ (prob - y) + reg * w
        if np.max(np.abs(grad)) < tol:
            break
        s = np.maximum(prob * (1.0 - prob), 1e-12)
        hess = (Xb * s[:, None]).T @ Xb + np.diag(reg + 1e-12)
        w = w - np.linalg.solve(hess, grad)
    return MortalityClassifier(weights=w[:-1].copy(), bias=float(w[-1]), horizon=horizon)
