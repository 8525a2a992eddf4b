"""Point estimates, the cross-fit estimator and bootstrap intervals."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .model import BalancePartition, Dataset, Dispersion, EstimandKind, EstimandSpec, WeightSolution
from .rng import stream
from .select import (DESIGN, MODEL, RelaxedPositivityError, fit_nuisances_data, select_g_adaptive,
                     select_g_static, static_order)
from .solver import DEFAULT_CONFIG, SolverConfig, fit_weights

logger = logging.getLogger(__name__)

Z975 = 1.959964


class InfeasibleError(RuntimeError):
    """The balancing problem has no solution for this dataset."""


@dataclass
class EstimateReport:
    tau_hat: float
    se_boot: float
    ci_low: float
    ci_high: float
    boot_total: int
    boot_failed: int
    estimand: EstimandSpec
    g_used: List[int]
    seed: int
    verdict: str = "ok"
    ci_kind: str = "wald"
    extra: dict = field(default_factory=dict)


def weighted_effect(w, data: Dataset) -> float:
    """``(1/m) sum w z y - (1/m) sum w (1 - z) y`` over the analysis units."""
    if data.y is None:
        raise ValueError("outcomes are required")
    wv = w.w if isinstance(w, WeightSolution) else np.asarray(w, dtype=float)
    if isinstance(w, WeightSolution) and not w.feasible:
        raise InfeasibleError("weights are not feasible")
    mask = data.analysis_mask
    wa, z, y = wv[mask], data.z[mask], data.y[mask]
    m = wa.size
    return float(np.sum(wa * z * y) / m - np.sum(wa * (1 - z) * y) / m)


# --------------------------------------------------------------------------
# pipelines: data -> (estimate, g used); raise InfeasibleError on failure


Pipeline = Callable[[Dataset], tuple]


def prtbw_pipeline(est: Optional[EstimandSpec] = None, d: Dispersion = Dispersion(),
                   g: Optional[Sequence[int]] = None, metric: Optional[str] = DESIGN,
                   static: bool = False, g0: Sequence[int] = (),
                   cfg: SolverConfig = DEFAULT_CONFIG, seed: int = 0) -> Pipeline:
    """Closure running weights (and, unless ``g`` is fixed, g-selection).

    ``metric=MODEL`` uses the cross-fit estimator.
    """
    est = est or EstimandSpec()

    def run(data: Dataset):
        if g is not None:
            ws = fit_weights(data, BalancePartition.from_g(data.p, g), est, d, cfg)
            if not ws.feasible:
                raise InfeasibleError("infeasible with the fixed g set")
            return weighted_effect(ws, data), list(g)
        try:
            if metric == MODEL:
                res = crossfit_effect(data, est, d, cfg, seed=seed, g0=g0)
                return res["tau_hat"], res["g_used"]
            if static:
                sel = select_g_static(data, g0=g0, est=est, d=d, metric=metric, cfg=cfg, seed=seed)
            else:
                sel = select_g_adaptive(data, g0, est, d, metric, cfg, seed=seed)
        except RelaxedPositivityError as exc:
            raise InfeasibleError(str(exc)) from exc
        return weighted_effect(sel.final_weights, data), sel.g_idx

    return run


def crossfit_effect(data: Dataset, est: Optional[EstimandSpec] = None, d: Dispersion = Dispersion(),
                    cfg: SolverConfig = DEFAULT_CONFIG, folds: int = 2, seed: int = 0,
                    g0: Sequence[int] = ()) -> dict:
    """Two-fold cross-fit estimator with the model-based metric.

    g is selected on one fold (nuisances fit on that fold only), weights are
    recomputed on the other fold with that g, and the two fold estimates are
    combined by fold size.  When the other fold is infeasible with the
    selected g, g is extended along the selecting fold's static order.
    """
    est = est or EstimandSpec()
    if folds != 2:
        raise ValueError("only two folds are supported")
    if data.y is None:
        raise ValueError("outcomes are required")
    # split within each (population, arm) stratum so both folds keep every arm
    strata = np.where(data.analysis_mask, np.nan_to_num(data.z, nan=-1.0), -1.0)
    if data.r is not None:
        strata = strata + 10.0 * data.r
    rng = stream(seed, 11)
    fold = np.empty(data.n, dtype=int)
    offset = 0
    for lab in np.unique(strata):
        idx = np.flatnonzero(strata == lab)
        idx = idx[rng.permutation(idx.size)]
        fold[idx] = (np.arange(idx.size) + offset) % 2
        offset += idx.size
    parts = [np.flatnonzero(fold == k) for k in range(2)]
    for idx in parts:
        zz = data.z[idx][data.analysis_mask[idx]]
        if not (np.any(zz == 1) and np.any(zz == 0)):
            raise ValueError("cross-fitting needs both arms in each fold")

    taus, sizes, gs = [], [], []
    for k in range(2):
        sel_data = data.subset(parts[1 - k])
        est_data = data.subset(parts[k])
        try:
            nuis = fit_nuisances_data(sel_data, seed=seed)
            sel = select_g_adaptive(sel_data, g0, est, d, MODEL, cfg, nuis=nuis)
        except RelaxedPositivityError as exc:
            raise InfeasibleError(f"fold {1 - k}: {exc}") from exc
        g = list(sel.g_idx)
        ws = fit_weights(est_data, BalancePartition.from_g(data.p, g), est, d, cfg)
        if not ws.feasible:
            order, _ = static_order(sel_data, est, MODEL, nuis)
            for j in order:
                if j in g:
                    continue
                g.append(j)
                ws = fit_weights(est_data, BalancePartition.from_g(data.p, g), est, d, cfg)
                if ws.feasible:
                    break
        if not ws.feasible:
            raise InfeasibleError(f"fold {k} infeasible with every candidate retargeted")
        taus.append(weighted_effect(ws, est_data))
        sizes.append(int(est_data.analysis_mask.sum()))
        gs.append(g)
    total = sum(sizes)
    tau = sum(s / total * t for s, t in zip(sizes, taus))
    g_used = sorted(set(gs[0]) | set(gs[1]))
    return {"tau_hat": float(tau), "fold_estimates": taus, "fold_sizes": sizes, "fold_g": gs, "g_used": g_used}


# --------------------------------------------------------------------------
# bootstrap


def _resample(data: Dataset, rng: np.random.Generator) -> np.ndarray:
    if data.r is None:
        return rng.integers(0, data.n, size=data.n)
    out = []
    for lab in (0, 1):
        idx = np.flatnonzero(data.r == lab)
        out.append(idx[rng.integers(0, idx.size, size=idx.size)])
    return np.sort(np.concatenate(out))


def _replicate(data: Dataset, pipeline: Pipeline, seed: int, b: int) -> Optional[float]:
    idx = _resample(data, stream(seed, b))
    try:
        boot = data.subset(idx)
        tau, _ = pipeline(boot)
    except (InfeasibleError, ValueError) as exc:
        logger.debug("replicate %d failed: %s", b, exc)
        return None
    return float(tau) if np.isfinite(tau) else None


def bootstrap_ci(data: Dataset, pipeline: Pipeline, B: int = 500, seed: int = 0, threads: int = 1,
                 ci: str = "wald", est: Optional[EstimandSpec] = None) -> EstimateReport:
    """Point estimate on the full data plus a bootstrap interval.

    The default interval is Wald, ``tau_hat +/- 1.959964 * se_boot`` with
    ``se_boot`` the sd of the successful replicate estimates.  Failed
    replicates are counted and excluded; more than half failing marks the
    interval unreliable.
    """
    if B < 50:
        raise ValueError("B must be at least 50")
    if ci not in ("wald", "percentile"):
        raise ValueError(f"unknown interval kind {ci!r}")
    tau_hat, g_used = pipeline(data)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            reps = list(ex.map(lambda b: _replicate(data, pipeline, seed, b), range(B)))
    else:
        reps = [_replicate(data, pipeline, seed, b) for b in range(B)]
    ok = np.array([r for r in reps if r is not None])
    failed = B - ok.size
    se = float(np.std(ok, ddof=1)) if ok.size > 1 else float("nan")
    if ci == "wald":
        lo, hi = tau_hat - Z975 * se, tau_hat + Z975 * se
    else:
        lo, hi = (float(np.quantile(ok, 0.025)), float(np.quantile(ok, 0.975))) if ok.size else (np.nan, np.nan)
    verdict = "CI unreliable" if failed > B / 2 else "ok"
    if verdict != "ok":
        logger.warning("%d of %d bootstrap replicates failed; CI unreliable", failed, B)
    if est is None:
        est = EstimandSpec(EstimandKind.TRANSPORT) if data.r is not None else EstimandSpec()
    return EstimateReport(float(tau_hat), se, float(lo), float(hi), B, failed, est, list(g_used), seed,
                          verdict, ci)
