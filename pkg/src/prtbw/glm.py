"""Small GLM fitters used by the comparators and the nuisance models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit


@dataclass(frozen=True)
class LogisticFit:
    coef: np.ndarray  # intercept first
    converged: bool
    separated: bool
    iterations: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        return expit(self.coef[0] + X @ self.coef[1:])


def logistic_irls(X: np.ndarray, y: np.ndarray, penalty: float = 0.0, max_iter: int = 100,
                  tol: float = 1e-12, sep_bound: float = 1e4) -> LogisticFit:
    """Logistic regression by iteratively reweighted least squares.

    ``penalty`` is a ridge penalty ``penalty * n * ||beta||^2 / 2`` on the
    slopes only.  Divergence of the coefficients past ``sep_bound`` is taken
    as (quasi-)complete separation.
    """
    n, p = X.shape
    D = np.hstack([np.ones((n, 1)), X])
    beta = np.zeros(p + 1)
    pen = np.full(p + 1, penalty * n)
    pen[0] = 0.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = D @ beta
        mu = expit(eta)
        W = np.maximum(mu * (1.0 - mu), 1e-12)
        grad = D.T @ (y - mu) - pen * beta
        H = (D * W[:, None]).T @ D + np.diag(pen)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        beta = beta + step
        if np.max(np.abs(beta)) > sep_bound:
            return LogisticFit(beta, False, True, it)
        if np.max(np.abs(step)) <= tol * (1.0 + np.max(np.abs(beta))):
            converged = True
            break
    separated = False
    if not converged and penalty == 0.0 and np.any(y == 1) and np.any(y == 0):
        eta = D @ beta
        separated = bool(eta[y == 1].min() >= eta[y == 0].max())
    return LogisticFit(beta, converged, separated, it)


@dataclass(frozen=True)
class RidgeFit:
    intercept: float
    coef: np.ndarray
    center: np.ndarray
    scale: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.intercept + ((X - self.center) / self.scale) @ self.coef


def ridge_fit(X: np.ndarray, y: np.ndarray, penalty: float) -> RidgeFit:
    """Minimise ``mean((y - a - Xs b)^2) + penalty * ||b||^2`` on
    standardized columns ``Xs``."""
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    Xs = (X - center) / scale
    n, p = Xs.shape
    yc = y - y.mean()
    coef = np.linalg.solve(Xs.T @ Xs / n + penalty * np.eye(p), Xs.T @ yc / n) if p else np.zeros(0)
    return RidgeFit(float(y.mean()), coef, center, scale)
