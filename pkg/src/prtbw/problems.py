"""Constraint systems and dual objectives for every supported estimand.

All estimands share one system.  For analysis unit ``i`` define the feature row

    treated:  f_i = ( 0,   c_i,  g_i)
    control:  f_i = ( c_i, 0,   -g_i)

in the parameter layout ``theta = (alpha0, alpha1, gamma)``.  The primal
constraints are ``A w = b`` with ``A = F.T / m`` and ``b = (cbar, cbar, 0)``,
and the dual loss is

    loss(theta) = -(1/m) sum_i rho(f_i . theta) + theta . b

whose gradient is ``b - A rho'(F theta)``: the negated balance residuals.
Estimands differ only in the analysis set and the target mean ``cbar``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import BalancePartition, Dataset, Dispersion, EstimandKind, EstimandSpec


class ProblemError(ValueError):
    """The data cannot define the requested balancing problem."""


@dataclass(frozen=True)
class Standardizer:
    center: np.ndarray
    scale: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (X - self.center) / self.scale


@dataclass(frozen=True)
class ConstraintSystem:
    F: np.ndarray  # standardized feature rows, m x (2K + L)
    F_raw: np.ndarray  # same rows on the original covariate scale
    b: np.ndarray
    b_raw: np.ndarray
    z: np.ndarray  # treatment of analysis units
    analysis_mask: np.ndarray
    c_target_mean: np.ndarray  # original scale, intercept first
    standardizer: Standardizer
    partition: BalancePartition
    estimand: EstimandSpec
    row_labels: tuple

    @property
    def m(self) -> int:
        return self.F.shape[0]

    @property
    def K(self) -> int:
        return self.partition.K

    @property
    def L(self) -> int:
        return self.partition.L

    @property
    def n_params(self) -> int:
        return self.F.shape[1]

    @property
    def A(self) -> np.ndarray:
        return self.F.T / self.m

    @property
    def A_raw(self) -> np.ndarray:
        return self.F_raw.T / self.m

    def residuals(self, w_analysis: np.ndarray, standardized: bool = True) -> np.ndarray:
        """``A w - b`` for weights on the analysis units."""
        if standardized:
            return self.F.T @ w_analysis / self.m - self.b
        return self.F_raw.T @ w_analysis / self.m - self.b_raw

    def split_theta(self, theta: np.ndarray):
        K = self.K
        return theta[:K], theta[K:2 * K], theta[2 * K:]


def _weighted_mean_sd(X: np.ndarray, weights: np.ndarray):
    wn = weights / weights.sum()
    mean = wn @ X
    var = wn @ (X - mean) ** 2
    return mean, np.sqrt(np.maximum(var, 0.0))


def _features(C: np.ndarray, G: np.ndarray, z: np.ndarray) -> np.ndarray:
    m, K = C.shape
    L = G.shape[1]
    F = np.zeros((m, 2 * K + L))
    t = z == 1
    F[t, K:2 * K] = C[t]
    F[~t, :K] = C[~t]
    F[t, 2 * K:] = G[t]
    F[~t, 2 * K:] = -G[~t]
    return F


def target_weights(data: Dataset, est: EstimandSpec) -> np.ndarray:
    """Per-unit weights (length n) defining the target population."""
    n = data.n
    if est.kind is EstimandKind.ATE:
        return np.ones(n)
    if est.kind is EstimandKind.ATT:
        return (data.z == 1).astype(float)
    if est.kind is EstimandKind.WATE:
        h = np.asarray(est.h_values, dtype=float)
        if h.shape[0] != n:
            raise ProblemError(f"WATE tilting vector has length {h.shape[0]}, expected {n}")
        return h
    if data.r is None:
        raise ProblemError("transport estimand requires a population indicator r")
    tw = (data.r == 0).astype(float)
    if tw.sum() == 0:
        raise ProblemError("transport estimand requires target-population units (r = 0)")
    return tw


def build_system(data: Dataset, part: BalancePartition, est: Optional[EstimandSpec] = None) -> ConstraintSystem:
    est = est or EstimandSpec()
    if part.p != data.p:
        raise ProblemError(f"partition declares {part.p} columns, data has {data.p}")
    if est.kind is EstimandKind.TRANSPORT:
        if data.r is None:
            raise ProblemError("transport estimand requires a population indicator r")
        mask = data.r == 1
    else:
        mask = np.ones(data.n, dtype=bool)
    z = data.z[mask]
    if not (np.any(z == 1) and np.any(z == 0)):
        raise ProblemError("empty treatment arm among analysis units")

    tw = target_weights(data, est)
    if not np.any(tw > 0):
        raise ProblemError("target population is empty")
    X = data.X
    center, scale = _weighted_mean_sd(X, tw)
    # columns constant on the target fall back to their analysis-sample spread
    flat = scale <= 1e-12 * np.maximum(1.0, np.abs(center))
    if np.any(flat):
        sd_a = X[mask].std(axis=0)
        scale = np.where(flat, np.where(sd_a > 0, sd_a, 1.0), scale)
    std = Standardizer(center=center, scale=scale)

    Xa = X[mask]
    Xs = std.apply(Xa)
    ones = np.ones((Xa.shape[0], 1))
    c, g = list(part.c_idx), list(part.g_idx)
    C = np.hstack([ones, Xs[:, c]])
    G = Xs[:, g]
    C_raw = np.hstack([ones, Xa[:, c]])
    G_raw = Xa[:, g]

    cbar_raw = np.concatenate([[1.0], center[c]])
    cbar = np.zeros(len(c) + 1)
    cbar[0] = 1.0
    L = len(g)
    b = np.concatenate([cbar, cbar, np.zeros(L)])
    b_raw = np.concatenate([cbar_raw, cbar_raw, np.zeros(L)])

    names = ["(intercept)"] + [data.columns[j] for j in c]
    labels = tuple(
        [f"control:{nm}" for nm in names]
        + [f"treated:{nm}" for nm in names]
        + [f"between:{data.columns[j]}" for j in g]
    )
    return ConstraintSystem(
        F=_features(C, G, z),
        F_raw=_features(C_raw, G_raw, z),
        b=b,
        b_raw=b_raw,
        z=z,
        analysis_mask=mask,
        c_target_mean=cbar_raw,
        standardizer=std,
        partition=part,
        estimand=est,
        row_labels=labels,
    )


class DualObjective:
    """Loss, gradient and Hessian of the balancing dual.

    Works on any feature matrix / target pair, so the same object serves the
    joint problem and the single-arm problems used by direct balancing.
    """

    def __init__(self, F: np.ndarray, b: np.ndarray, m: int, d: Dispersion):
        self.F = F
        self.b = b
        self.m = m
        self.d = d

    @property
    def dim(self) -> int:
        return self.F.shape[1]

    def eta(self, theta: np.ndarray) -> np.ndarray:
        return self.F @ theta

    def weights(self, theta: np.ndarray) -> np.ndarray:
        return self.d.rho_prime(self.eta(theta))

    def loss(self, theta: np.ndarray) -> float:
        eta = self.eta(theta)
        return float(-np.sum(self.d.rho(eta)) / self.m + theta @ self.b)

    def grad(self, theta: np.ndarray) -> np.ndarray:
        return self.b - self.F.T @ self.weights(theta) / self.m

    def hess(self, theta: np.ndarray) -> np.ndarray:
        curv = -self.d.rho_double_prime(self.eta(theta))
        return (self.F * curv[:, None]).T @ self.F / self.m

    def __call__(self, theta: np.ndarray):
        return self.loss(theta), self.grad(theta)


def dual_objective(sys: ConstraintSystem, d: Dispersion) -> DualObjective:
    return DualObjective(sys.F, sys.b, sys.m, d)
