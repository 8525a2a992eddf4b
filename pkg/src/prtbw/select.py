"""Choosing which covariates to retarget.

The greedy loop moves one covariate at a time from ``c`` into ``g`` until the
balancing problem has a solution.  Two metrics drive the choice:

* design: Spearman semipartial correlation with the treatment (or, for
  transport, with trial membership); the most predictive column moves first.
* model: the doubly robust treatment-effect-modification score; the least
  modifying column moves first.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .glm import logistic_irls, ridge_fit
from .model import BalancePartition, Dataset, Dispersion, EstimandKind, EstimandSpec, WeightSolution
from .rng import stream
from .solver import DEFAULT_CONFIG, SolverConfig, fit_weights

logger = logging.getLogger(__name__)

PENALTY_GRID = (1e-4, 1e-2, 1.0)
E_CLIP = (0.01, 0.99)
DESIGN = "design"
MODEL = "model"


class RelaxedPositivityError(RuntimeError):
    """Every candidate is retargeted and the problem is still infeasible."""


@dataclass
class SelectionResult:
    g_idx: List[int]
    metric_trace: List[dict]
    steps: int
    final_weights: WeightSolution
    metric: str = DESIGN
    order: Optional[List[int]] = None  # fixed order for the static variant


@dataclass(frozen=True)
class NuisanceFit:
    mu0_hat: np.ndarray
    mu1_hat: np.ndarray
    e_hat: np.ndarray
    fold_id: np.ndarray
    penalties: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# metrics


def _residualize_all(R: np.ndarray) -> np.ndarray:
    """Residual of every column of ``R`` regressed (with intercept) on the
    remaining columns."""
    n, k = R.shape
    M = np.hstack([np.ones((n, 1)), R])
    G = M.T @ M
    if k > 1 and np.linalg.cond(G) < 1e10:
        Ginv = np.linalg.inv(G)
        # Residual of column j on the others is M Ginv[:, j] / Ginv[j, j].
        E = (M @ Ginv[:, 1:]) / np.diag(Ginv)[1:]
        return E
    E = np.empty_like(R)
    for j in range(k):
        others = np.delete(M, j + 1, axis=1)
        coef = np.linalg.lstsq(others, R[:, j], rcond=None)[0]
        E[:, j] = R[:, j] - others @ coef
    return E


def spearman_semipartial(X: np.ndarray, z: np.ndarray, candidates: Sequence[int]) -> Dict[int, float]:
    """``|corr(rank z, residual of rank X_j on ranks of the other candidates)|``
    for every candidate ``j``.  Average ranks on ties."""
    cand = list(candidates)
    if not cand:
        return {}
    rz = rankdata(z)
    rz = rz - rz.mean()
    R = np.column_stack([rankdata(X[:, j]) for j in cand])
    flat = R.std(axis=0) == 0
    if np.any(flat):
        logger.warning("constant candidate columns %s get metric 0", [cand[i] for i in np.flatnonzero(flat)])
    keep = np.flatnonzero(~flat)
    out = {j: 0.0 for j in cand}
    if keep.size == 0 or np.std(rz) == 0:
        return out
    Rk = R[:, keep]
    E = _residualize_all(Rk)
    sd_r = Rk.std(axis=0)
    for col, i in enumerate(keep):
        e = E[:, col]
        se = e.std()
        if se <= 1e-8 * sd_r[col]:
            continue  # fully explained by the other candidates
        out[cand[i]] = float(abs(np.mean((e - e.mean()) * rz) / (se * rz.std())))
    return out


def tem_scores(X: np.ndarray, y: np.ndarray, z: np.ndarray, nuis: NuisanceFit,
               candidates: Sequence[int]) -> Dict[int, float]:
    """Doubly robust effect-modification score per candidate column.

    Columns are mean-centered first, so a constant conditional effect
    scores near zero.  All-zero columns are skipped.
    """
    e = nuis.e_hat
    mu_z = np.where(z == 1, nuis.mu1_hat, nuis.mu0_hat)
    psi = (y - mu_z) * (2 * z - 1) / (z * e + (1 - z) * (1 - e)) + nuis.mu1_hat - nuis.mu0_hat
    out = {}
    for j in candidates:
        x = X[:, j] - X[:, j].mean()
        ss = float(x @ x)
        if ss == 0:
            logger.warning("column %d has zero sum of squares; skipped", j)
            continue
        out[j] = float(abs(x @ psi / ss))
    return out


# --------------------------------------------------------------------------
# nuisances


def _split(labels: np.ndarray, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Fold ids stratified on ``labels`` (each label dealt round-robin)."""
    fold = np.empty(labels.size, dtype=int)
    offset = 0
    for lab in np.unique(labels):
        idx = np.flatnonzero(labels == lab)
        idx = idx[rng.permutation(idx.size)]
        fold[idx] = (np.arange(idx.size) + offset) % folds
        offset += idx.size
    return fold


def _pick_penalty(fit_loss, n: int, rng: np.random.Generator, strata: np.ndarray) -> float:
    """Two-fold internal validation over the penalty grid; ties go to the
    largest penalty."""
    inner = _split(strata, 2, rng)
    best, best_loss = None, np.inf
    for pen in sorted(PENALTY_GRID, reverse=True):
        loss = 0.0
        for k in range(2):
            tr, va = inner != k, inner == k
            loss += fit_loss(pen, tr, va)
        if loss < best_loss * (1 - 1e-12) or best is None:
            best, best_loss = pen, loss
    return best


def _ridge_predictions(X, y, Xout, rng):
    def loss(pen, tr, va):
        if tr.sum() < 2 or va.sum() < 1:
            return 0.0
        f = ridge_fit(X[tr], y[tr], pen)
        return float(np.mean((y[va] - f.predict(X[va])) ** 2))

    pen = _pick_penalty(loss, len(y), rng, np.zeros(len(y)))
    return ridge_fit(X, y, pen).predict(Xout), pen


def _logistic_predictions(X, z, Xout, rng):
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    Xs, Xo = (X - center) / scale, (Xout - center) / scale

    def loss(pen, tr, va):
        f = logistic_irls(Xs[tr], z[tr], penalty=pen)
        p = np.clip(f.predict(Xs[va]), 1e-12, 1 - 1e-12)
        return float(-np.mean(z[va] * np.log(p) + (1 - z[va]) * np.log(1 - p)))

    pen = _pick_penalty(loss, len(z), rng, z)
    return logistic_irls(Xs, z, penalty=pen).predict(Xo), pen


def fit_nuisances(X: np.ndarray, y: np.ndarray, z: np.ndarray, folds: int = 2, seed: int = 0) -> NuisanceFit:
    """Cross-fitted ridge outcome models (one per arm) and a ridge-logistic
    propensity model.  Each unit's predictions come from models trained on
    the other folds."""
    if folds < 2:
        raise ValueError("folds must be >= 2")
    n = len(z)
    for k in range(2):
        if np.sum(z == k) < folds:
            raise ValueError(f"arm {k} has fewer than {folds} units")
    rng = stream(seed, 0)
    fold = rng.integers(0, folds, size=n)
    if any(len(np.unique(z[fold != k])) < 2 or np.sum(fold == k) == 0 for k in range(folds)):
        logger.info("refolding with stratification on treatment")
        fold = _split(z, folds, rng)
    mu0 = np.empty(n)
    mu1 = np.empty(n)
    e = np.empty(n)
    pens = {"mu0": [], "mu1": [], "e": []}
    for k in range(folds):
        tr, te = fold != k, fold == k
        for arm, out, key in ((0, mu0, "mu0"), (1, mu1, "mu1")):
            sel = tr & (z == arm)
            out[te], pen = _ridge_predictions(X[sel], y[sel], X[te], stream(seed, 1, k, arm))
            pens[key].append(pen)
        e[te], pen = _logistic_predictions(X[tr], z[tr].astype(float), X[te], stream(seed, 2, k))
        pens["e"].append(pen)
    e = np.clip(e, *E_CLIP)
    return NuisanceFit(mu0, mu1, e, fold, pens)


def fit_nuisances_data(data: Dataset, folds: int = 2, seed: int = 0) -> NuisanceFit:
    if data.y is None:
        raise ValueError("outcomes are required for the model-based metric")
    mask = data.analysis_mask
    return fit_nuisances(data.X[mask], data.y[mask], data.z[mask], folds, seed)


# --------------------------------------------------------------------------
# greedy selection


def _metric_inputs(data: Dataset, est: EstimandSpec):
    """Design metric target: treatment on the analysis units, or trial
    membership over all units for transport."""
    if est.kind == EstimandKind.TRANSPORT:
        return data.X, data.r.astype(float)
    mask = data.analysis_mask
    return data.X[mask], data.z[mask]


def _scores(data, est, metric, remaining, nuis):
    if metric == DESIGN:
        X, lab = _metric_inputs(data, est)
        return spearman_semipartial(X, lab, remaining)
    mask = data.analysis_mask
    return tem_scores(data.X[mask], data.y[mask], data.z[mask], nuis, remaining)


def _best(scores: Dict[int, float], metric: str) -> int:
    # lowest column index wins ties
    items = sorted(scores.items())
    if metric == DESIGN:
        return max(items, key=lambda kv: kv[1])[0]
    return min(items, key=lambda kv: kv[1])[0]


def _check_metric(metric: str):
    if metric not in (DESIGN, MODEL):
        raise ValueError(f"unknown metric {metric!r}")


def select_g_adaptive(data: Dataset, g0: Sequence[int] = (), est: Optional[EstimandSpec] = None,
                      d: Dispersion = Dispersion(), metric: str = DESIGN, cfg: SolverConfig = DEFAULT_CONFIG,
                      nuis: Optional[NuisanceFit] = None, candidates: Optional[Sequence[int]] = None,
                      seed: int = 0) -> SelectionResult:
    """Greedy retargeting: recompute the metric over the remaining
    candidates at every step and move the best one into ``g``."""
    _check_metric(metric)
    est = est or EstimandSpec()
    g = [int(j) for j in g0]
    cand = list(range(data.p)) if candidates is None else [int(j) for j in candidates]
    ws = fit_weights(data, BalancePartition.from_g(data.p, g), est, d, cfg)
    if metric == MODEL and nuis is None and not ws.feasible:
        nuis = fit_nuisances_data(data, seed=seed)
    trace = []
    while not ws.feasible:
        remaining = [j for j in cand if j not in g]
        scores = _scores(data, est, metric, remaining, nuis) if remaining else {}
        if not scores:
            raise RelaxedPositivityError("relaxed positivity fails: infeasible with every candidate retargeted")
        pick = _best(scores, metric)
        trace.append({"step": len(trace) + 1, "scores": scores, "chosen": pick})
        g.append(pick)
        ws = fit_weights(data, BalancePartition.from_g(data.p, g), est, d, cfg)
    return SelectionResult(g, trace, len(trace), ws, metric)


def static_order(data: Dataset, est: Optional[EstimandSpec] = None, metric: str = DESIGN,
                 nuis: Optional[NuisanceFit] = None, candidates: Optional[Sequence[int]] = None,
                 seed: int = 0) -> tuple:
    """Candidate order from a single metric evaluation: ``(order, scores)``."""
    _check_metric(metric)
    est = est or EstimandSpec()
    cand = list(range(data.p)) if candidates is None else [int(j) for j in candidates]
    if metric == MODEL and nuis is None:
        nuis = fit_nuisances_data(data, seed=seed)
    scores = _scores(data, est, metric, cand, nuis)
    sign = -1.0 if metric == DESIGN else 1.0
    order = sorted(scores, key=lambda j: (sign * scores[j], j))
    return order, scores


def select_g_static(data: Dataset, order: Optional[Sequence[int]] = None, g0: Sequence[int] = (),
                    est: Optional[EstimandSpec] = None, d: Dispersion = Dispersion(), metric: str = DESIGN,
                    cfg: SolverConfig = DEFAULT_CONFIG, nuis: Optional[NuisanceFit] = None,
                    seed: int = 0) -> SelectionResult:
    """Greedy retargeting along a frozen order (computed once when not
    given)."""
    est = est or EstimandSpec()
    scores = None
    if order is None:
        order, scores = static_order(data, est, metric, nuis, seed=seed)
    g = [int(j) for j in g0]
    ws = fit_weights(data, BalancePartition.from_g(data.p, g), est, d, cfg)
    trace = []
    queue = [j for j in order if j not in g]
    while not ws.feasible:
        if not queue:
            raise RelaxedPositivityError("relaxed positivity fails: infeasible with every candidate retargeted")
        pick = queue.pop(0)
        trace.append({"step": len(trace) + 1, "scores": scores or {}, "chosen": pick})
        g.append(pick)
        ws = fit_weights(data, BalancePartition.from_g(data.p, g), est, d, cfg)
    return SelectionResult(g, trace, len(trace), ws, metric, list(order))


def rare_binary_seed(data: Dataset, threshold: float = 0.05) -> List[int]:
    """Binary columns whose less common value occurs in under ``threshold`` of
    the analysis units; used as an initial ``g`` set."""
    X = data.X[data.analysis_mask]
    out = []
    for j in range(data.p):
        col = X[:, j]
        if np.all((col == 0) | (col == 1)):
            prev = col.mean()
            if min(prev, 1 - prev) < threshold:
                out.append(j)
    return out
