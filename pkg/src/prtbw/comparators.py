"""Baseline estimators: Hajek IPW (ATE), overlap weights (ATO), minimal
weights through the l1-penalised dual, and inverse-odds transport weights."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .glm import logistic_irls
from .model import BalancePartition, Dataset, Dispersion, EstimandSpec, WeightSolution
from .problems import DualObjective, build_system
from .solver import DEFAULT_CONFIG, SolverConfig, _ess, phase_one

logger = logging.getLogger(__name__)

PS_CLIP = (0.001, 0.999)
DELTA_GRID = (0.01, 0.05, 0.1)


@dataclass(frozen=True)
class PropensityFit:
    e_hat: np.ndarray  # analysis units only
    coef: np.ndarray
    separated: bool
    clipped: int
    converged: bool
    flags: tuple = field(default_factory=tuple)
    e_raw: Optional[np.ndarray] = None  # unclipped; overlap weights need no clip


def fit_logistic_ps(data: Dataset, columns: Optional[Sequence[int]] = None,
                    clip=PS_CLIP) -> PropensityFit:
    """Maximum-likelihood logistic propensity model on the analysis units.

    Estimates are clipped to ``clip`` only to keep inverse weights finite; any
    clipping or separation is flagged.  The unclipped fit is kept in
    ``e_raw`` for overlap weighting, whose exact mean balance depends on it.
    """
    mask = data.analysis_mask
    X = data.X[mask] if columns is None else data.X[mask][:, list(columns)]
    z = data.z[mask]
    fit = logistic_irls(X, z)
    e_raw = fit.predict(X)
    e = np.clip(e_raw, *clip)
    clipped = int(np.sum(e != e_raw))
    flags = []
    if fit.separated:
        flags.append("separated")
        logger.warning("propensity model separated; estimates saturated")
    if clipped:
        flags.append("clipped")
    return PropensityFit(e, fit.coef, fit.separated, clipped, fit.converged, tuple(flags), e_raw)


def _hajek(y, z, w1, w0) -> float:
    t = z == 1
    if not (np.any(t) and np.any(~t)):
        raise ValueError("both treatment arms are required")
    return float(np.sum(w1[t] * y[t]) / np.sum(w1[t]) - np.sum(w0[~t] * y[~t]) / np.sum(w0[~t]))


def _analysis_outcomes(data: Dataset):
    if data.y is None:
        raise ValueError("outcomes are required")
    mask = data.analysis_mask
    return data.y[mask], data.z[mask]


def ipw_weights(e_hat: np.ndarray, z: np.ndarray, estimand: str = "ATE") -> np.ndarray:
    if estimand == "ATE":
        return np.where(z == 1, 1.0 / e_hat, 1.0 / (1.0 - e_hat))
    if estimand == "ATO":
        return np.where(z == 1, 1.0 - e_hat, e_hat)
    raise ValueError(f"unknown IPW estimand {estimand!r}")


def ipw_ate(data: Dataset, e_hat: np.ndarray) -> float:
    y, z = _analysis_outcomes(data)
    w = ipw_weights(e_hat, z, "ATE")
    return _hajek(y, z, w, w)


def ipw_ato(data: Dataset, e_hat: np.ndarray) -> float:
    y, z = _analysis_outcomes(data)
    w = ipw_weights(e_hat, z, "ATO")
    return _hajek(y, z, w, w)


def iow_transport(data: Dataset, keep: Optional[np.ndarray] = None) -> tuple:
    """Normalised inverse-odds-of-participation estimator of the transported
    effect.  Returns ``(estimate, p_trial)`` where ``p_trial`` is the fitted
    probability of trial membership for every unit."""
    if data.r is None or data.y is None:
        raise ValueError("transport needs r and y")
    keep = np.ones(data.n, dtype=bool) if keep is None else keep
    fit = logistic_irls(data.X[keep], data.r[keep].astype(float))
    p = np.clip(fit.predict(data.X), *PS_CLIP)
    trial = keep & (data.r == 1)
    odds = (1.0 - p[trial]) / p[trial]
    est = _hajek(data.y[trial], data.z[trial], odds, odds)
    return est, p


# --------------------------------------------------------------------------
# minimal weights


def _soft(x, thr):
    return np.sign(x) * np.maximum(np.abs(x) - thr, 0.0)


def _kkt_violation(alpha, grad, delta):
    v = np.abs(grad).copy()
    pen = np.arange(alpha.size) > 0
    nz = pen & (alpha != 0)
    v[nz] = np.abs(grad[nz] + delta * np.sign(alpha[nz]))
    z = pen & (alpha == 0)
    v[z] = np.maximum(np.abs(grad[z]) - delta, 0.0)
    return float(np.max(v)) if v.size else 0.0


def _polish(obj: DualObjective, alpha, delta, iters=50):
    """Newton steps on the smooth piece selected by the current sign pattern."""
    pen = np.arange(alpha.size) > 0
    for _ in range(iters):
        active = ~pen | (alpha != 0)
        s = np.where(pen, np.sign(alpha), 0.0)
        g = obj.grad(alpha) + delta * s
        if np.max(np.abs(g[active])) <= 1e-13:
            break
        H = obj.hess(alpha)[np.ix_(active, active)]
        try:
            step = -np.linalg.solve(H + 1e-12 * np.eye(H.shape[0]), g[active])
        except np.linalg.LinAlgError:
            break
        new = alpha.copy()
        new[active] += step
        if np.any(np.sign(new[active & pen]) != s[active & pen]):
            break  # sign change: leave it to the proximal iterations
        alpha = new
    return alpha


def _prox_grad(obj: DualObjective, delta: float, tol: float, max_iter: int):
    """FISTA with backtracking and adaptive restart on
    ``loss(alpha) + delta * ||alpha[1:]||_1``."""
    k = obj.dim
    pen = np.arange(k) > 0
    thr_mask = pen.astype(float)

    def F(a):
        return obj.loss(a) + delta * np.sum(np.abs(a[pen]))

    alpha = np.zeros(k)
    y = alpha.copy()
    t = 1.0
    L = 1.0
    f_alpha = F(alpha)
    for it in range(max_iter):
        if it % 25 == 0:
            alpha = _polish(obj, alpha, delta)
            f_alpha = F(alpha)
            y = alpha.copy()
            t = 1.0
            if _kkt_violation(alpha, obj.grad(alpha), delta) <= tol:
                return alpha, True, it
        gy = obj.grad(y)
        fy = obj.loss(y)
        while True:
            cand = _soft(y - gy / L, delta * thr_mask / L)
            diff = cand - y
            if obj.loss(cand) <= fy + gy @ diff + 0.5 * L * diff @ diff + 1e-15:
                break
            L *= 2.0
        f_cand = F(cand)
        if f_cand > f_alpha and t > 1.0:  # restart momentum
            y = alpha.copy()
            t = 1.0
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = cand + ((t - 1.0) / t_new) * (cand - alpha)
        alpha, f_alpha, t = cand, f_cand, t_new
        L = max(L / 1.5, 1e-8)
    alpha = _polish(obj, alpha, delta)
    return alpha, _kkt_violation(alpha, obj.grad(alpha), delta) <= tol, max_iter


def _approx_feasible(F: np.ndarray, b: np.ndarray, m: int, delta: float) -> bool:
    """LP check of ``|A w - b| <= delta`` on non-intercept rows, equality on
    the intercept row, ``w >= 0``."""
    A = F.T / m
    k, na = A.shape
    if k == 1 or delta <= 0:
        rows, rhs = A, b
    else:
        Ak = A[1:]
        nk = k - 1
        top = np.hstack([A[:1], np.zeros((1, 2 * nk))])
        up = np.hstack([Ak, np.eye(nk), np.zeros((nk, nk))])
        lo = np.hstack([Ak, np.zeros((nk, nk)), -np.eye(nk)])
        rows = np.vstack([top, up, lo])
        rhs = np.concatenate([b[:1], b[1:] + delta, b[1:] - delta])
    _, art, _, _, _, stalled = phase_one(rows, rhs)
    return (not stalled) and float(art.sum()) <= 1e-7


def minimal_weights(data: Dataset, est: Optional[EstimandSpec] = None, d: Dispersion = Dispersion(),
                    delta: float = 0.05, cfg: SolverConfig = DEFAULT_CONFIG,
                    tol: float = 1e-9, max_iter: int = 20000) -> WeightSolution:
    """Approximate-balance weights: per arm, the arm's dual loss plus
    ``delta * ||alpha||_1`` (intercept unpenalised), all covariates anchored
    to the target.  Standardized residuals are bounded by ``delta``.

    If no weights attain ``delta`` the returned solution has
    ``feasible=False`` and NaN weights.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    part = BalancePartition.from_g(data.p, ())
    sys = build_system(data, part, est)
    K = sys.K
    w_a = np.full(sys.m, np.nan)
    ok = True
    iters = 0
    for arm, cols in ((0, slice(0, K)), (1, slice(K, 2 * K))):
        rows = sys.z == arm
        F = sys.F[rows][:, cols]
        b = sys.b[cols]
        if d.nonnegative_weights and not _approx_feasible(F, b, sys.m, delta):
            ok = False
            break
        obj = DualObjective(F, b, sys.m, d)
        alpha, conv, it = _prox_grad(obj, delta, tol, max_iter)
        iters += it
        if not conv:
            logger.warning("minimal weights (delta=%g) did not reach KKT tolerance on arm %d", delta, arm)
        w_a[rows] = obj.weights(alpha)
        ok = ok and conv
    if not ok:
        w_a[:] = np.nan
    w = np.zeros(data.n)
    w[sys.analysis_mask] = w_a
    t = sys.z == 1
    std_res = sys.residuals(w_a, True)
    return WeightSolution(
        w=w,
        feasible=bool(ok and np.all(np.isfinite(w_a))),
        target_profile_g=np.zeros(0),
        balance_residuals=sys.residuals(w_a, False),
        standardized_residuals=std_res,
        ess_treated=_ess(w_a[t]) if ok else float("nan"),
        ess_control=_ess(w_a[~t]) if ok else float("nan"),
        partition=part,
        estimand=sys.estimand,
        dispersion=d,
        extra={"delta": delta, "iterations": iters},
    )


def minimal_weights_grid(data: Dataset, est: Optional[EstimandSpec] = None, d: Dispersion = Dispersion(),
                         deltas: Sequence[float] = DELTA_GRID, cfg: SolverConfig = DEFAULT_CONFIG,
                         extend: int = 8) -> WeightSolution:
    """Smallest ``delta`` on the grid that admits weights.  When none does,
    ``delta`` keeps doubling from the largest grid value (``extend`` times)."""
    grid = sorted(deltas)
    for _ in range(extend):
        grid.append(grid[-1] * 2.0)
    last = None
    for delta in grid:
        last = minimal_weights(data, est, d, delta, cfg)
        if last.feasible:
            return last
    return last


def minimal_effect(data: Dataset, ws: WeightSolution) -> float:
    y, z = _analysis_outcomes(data)
    w = ws.w[data.analysis_mask]
    return float(np.mean(w * z * y) - np.mean(w * (1 - z) * y))
