"""Balance tables, target-population profiles and weight summaries."""

from __future__ import annotations

import logging
from typing import Optional, Union

import numpy as np
import pandas as pd

from .model import BalancePartition, Dataset, EstimandSpec, WeightSolution
from .problems import target_weights

logger = logging.getLogger(__name__)


def _weights_vector(w: Union[None, np.ndarray, WeightSolution], data: Dataset) -> np.ndarray:
    if w is None:
        return data.analysis_mask.astype(float)
    if isinstance(w, WeightSolution):
        return np.asarray(w.w, dtype=float)
    return np.asarray(w, dtype=float)


def smd_table(data: Dataset, w: Union[None, np.ndarray, WeightSolution] = None,
              est: Optional[EstimandSpec] = None) -> pd.DataFrame:
    """Three-way standardized mean differences, one row per covariate.

    ``smd_tc`` compares the weighted treated and control means,
    ``smd_t_target`` / ``smd_c_target`` compare each arm with the target
    population.  The denominator is always the unweighted pooled sd
    ``sqrt((s1^2 + s0^2) / 2)`` of the analysis sample, so tables from
    different weighting methods share a scale.
    """
    if est is None and isinstance(w, WeightSolution) and w.estimand is not None:
        est = w.estimand
    est = est or (EstimandSpec("Transport") if data.r is not None else EstimandSpec())
    wv = _weights_vector(w, data)
    mask = data.analysis_mask
    X = data.X[mask]
    z = data.z[mask]
    wa = wv[mask]
    t = z == 1
    tw = target_weights(data, est)
    m_target = tw @ data.X / tw.sum()
    m_t = wa[t] @ X[t] / wa[t].sum()
    m_c = wa[~t] @ X[~t] / wa[~t].sum()
    var_t = X[t].var(axis=0, ddof=1) if t.sum() > 1 else np.zeros(data.p)
    var_c = X[~t].var(axis=0, ddof=1) if (~t).sum() > 1 else np.zeros(data.p)
    sd = np.sqrt((var_t + var_c) / 2.0)
    flat = sd <= 0
    if np.any(flat):
        logger.warning("zero pooled sd for %s; SMD reported as 0", [data.columns[j] for j in np.flatnonzero(flat)])
    safe = np.where(flat, 1.0, sd)

    def smd(a, b):
        return np.where(flat, 0.0, (a - b) / safe)

    return pd.DataFrame({
        "covariate": list(data.columns),
        "mean_treated": m_t,
        "mean_control": m_c,
        "mean_target": m_target,
        "sd_pooled": sd,
        "smd_tc": smd(m_t, m_c),
        "smd_t_target": smd(m_t, m_target),
        "smd_c_target": smd(m_c, m_target),
        "zero_sd": flat,
    })


def average_abs_smd(table: pd.DataFrame) -> dict:
    return {
        "smd_tc": float(table["smd_tc"].abs().mean()),
        "smd_t_target": float(table["smd_t_target"].abs().mean()),
        "smd_c_target": float(table["smd_c_target"].abs().mean()),
    }


def target_profile(w: WeightSolution, data: Dataset, part: Optional[BalancePartition] = None,
                   est: Optional[EstimandSpec] = None) -> pd.DataFrame:
    """Where each retargeted column's weighted common mean landed relative to
    the original target mean, in target-sd units."""
    part = part or w.partition
    est = est or w.estimand or EstimandSpec()
    g = list(part.g_idx)
    cols = ["covariate", "weighted_mean", "target_mean", "target_sd", "shift_sd"]
    if not g:
        return pd.DataFrame(columns=cols)
    mask = data.analysis_mask
    t = data.z[mask] == 1
    wa = w.w[mask]
    Xg = data.X[mask][:, g]
    prof = wa[t] @ Xg[t] / wa[t].sum()
    tw = target_weights(data, est)
    tmean = tw @ data.X[:, g] / tw.sum()
    tsd = np.sqrt(tw @ (data.X[:, g] - tmean) ** 2 / tw.sum())
    shift = np.where(tsd > 0, (prof - tmean) / np.where(tsd > 0, tsd, 1.0), 0.0)
    return pd.DataFrame({
        "covariate": [data.columns[j] for j in g],
        "weighted_mean": prof,
        "target_mean": tmean,
        "target_sd": tsd,
        "shift_sd": shift,
    })


def _ess(w):
    s2 = float(np.sum(w * w))
    return float(np.sum(w)) ** 2 / s2 if s2 > 0 else 0.0


def weight_summary(w: Union[np.ndarray, WeightSolution], z: Optional[np.ndarray] = None,
                   mask: Optional[np.ndarray] = None) -> dict:
    """min / max / coefficient of variation over analysis units and the
    effective sample size ``(sum w)^2 / sum w^2`` per arm."""
    if isinstance(w, WeightSolution):
        wv = np.asarray(w.w, dtype=float)
    else:
        wv = np.asarray(w, dtype=float)
    if z is None:
        raise ValueError("treatment indicator required")
    z = np.asarray(z, dtype=float)
    mask = np.isfinite(z) if mask is None else mask
    wa, za = wv[mask], z[mask]
    mean = float(np.mean(wa))
    return {
        "min": float(np.min(wa)),
        "max": float(np.max(wa)),
        "cv": float(np.std(wa) / mean) if mean != 0 else float("nan"),
        "ess_treated": _ess(wa[za == 1]),
        "ess_control": _ess(wa[za == 0]),
    }


def balance_residuals(data: Dataset, w: Union[np.ndarray, WeightSolution], part: BalancePartition,
                      est: Optional[EstimandSpec] = None) -> np.ndarray:
    """Constraint residuals recomputed directly from the data on the original
    scale, in constraint-row order (control c, treated c, between-arm g)."""
    est = est or EstimandSpec()
    wv = _weights_vector(w, data)
    mask = data.analysis_mask
    m = int(mask.sum())
    X = data.X[mask]
    z = data.z[mask]
    wa = wv[mask]
    tw = target_weights(data, est)
    c = list(part.c_idx)
    cbar = np.concatenate([[1.0], tw @ data.X[:, c] / tw.sum()])
    C = np.hstack([np.ones((m, 1)), X[:, c]])
    t = z == 1
    res_c0 = C[~t].T @ wa[~t] / m - cbar
    res_c1 = C[t].T @ wa[t] / m - cbar
    G = X[:, list(part.g_idx)]
    res_g = (G[t].T @ wa[t] - G[~t].T @ wa[~t]) / m
    return np.concatenate([res_c0, res_c1, res_g])
