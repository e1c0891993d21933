"""Closed-form one-vs-all ridge readout."""

from __future__ import annotations

import numpy as np


def fit_ridge(X: np.ndarray, Y: np.ndarray, lam: float) -> np.ndarray:
    """argmin_W ||XW - Y||^2 + lam ||W||^2 via the SVD of X (no normal equations)."""
    if not lam > 0:
        raise ValueError(f"ridge lambda must be positive, got {lam}")
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    shrink = s / (s * s + lam)
    return Vt.T @ (shrink[:, None] * (U.T @ Y))


def one_vs_all_targets(labels: np.ndarray, num_classes: int) -> np.ndarray:
    Y = -np.ones((len(labels), num_classes))
    Y[np.arange(len(labels)), labels] = 1.0
    return Y


class RidgeClassifier:
    """Standardize with train statistics, then fit an intercept plus ridge weights."""

    def __init__(self, lam: float = 1e-2):
        self.lam = lam

    def fit(self, X, labels, num_classes):
        X = np.asarray(X, dtype=np.float64)
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.keep_ = std > 1e-12 * max(1.0, float(np.abs(X).max(initial=0.0)))
        self.std_ = np.where(self.keep_, std, 1.0)
        self.num_classes_ = num_classes
        Z = self._standardize(X)
        Y = one_vs_all_targets(np.asarray(labels), num_classes)
        self.bias_ = Y.mean(axis=0)
        if Z.shape[1] == 0:
            self.coef_ = np.zeros((0, num_classes))
        else:
            self.coef_ = fit_ridge(Z, Y - self.bias_, self.lam)
        return self

    @property
    def degenerate(self) -> bool:
        return not bool(self.keep_.any())

    def _standardize(self, X):
        return ((X - self.mean_) / self.std_)[:, self.keep_]

    def decision_function(self, X):
        return self._standardize(np.asarray(X, dtype=np.float64)) @ self.coef_ + self.bias_

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)
