"""Synthetic scenarios, estimator panels and the Monte Carlo study runner."""

from __future__ import annotations

import functools
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.special import expit
from scipy.stats import norm, truncnorm

from . import comparators
from .estimate import InfeasibleError, crossfit_effect, weighted_effect
from .model import BalancePartition, Dataset, Dispersion, EstimandSpec, WeightSolution
from .rng import stream
from .select import DESIGN, RelaxedPositivityError, select_g_adaptive
from .solver import DEFAULT_CONFIG, fit_weights

logger = logging.getLogger(__name__)

TRUNC = 3.0
# variance of a standard normal truncated to [-3, 3]
_TRUNC_VAR = 1.0 - 2.0 * TRUNC * norm.pdf(TRUNC) / (2.0 * norm.cdf(TRUNC) - 1.0)
ALPHA_MAGNITUDES = (0.5, 1.33, 2.16, 3.0)
BETA_LEVELS = (0.75, 0.6, 0.45, 0.3)
CALIBRATION_SEED = 20240917
CALIBRATION_DRAWS = 200_000

# (pct_treated, p) -> gamma levels and delta levels
LEVEL_TABLE = {
    (0.2, 20): {"gamma": {"low": 0.75, "low-med": 1.0, "med": 2.0}, "delta": {"low": 0.5, "medium": 1.0, "high": 2.0}},
    (0.4, 20): {"gamma": {"low": 0.5, "low-med": 0.75, "med": 1.0}, "delta": {"low": 0.5, "medium": 1.0, "high": 2.0}},
    (0.2, 100): {"gamma": {"low": 2.0, "low-med": 4.0, "med": 5.0}, "delta": {"low": 0.25, "medium": 0.75, "high": 1.25}},
    (0.4, 100): {"gamma": {"low": 1.0, "low-med": 2.0, "med": 3.0}, "delta": {"low": 0.25, "medium": 0.75, "high": 1.25}},
}


@dataclass(frozen=True)
class ScenarioConfig:
    p: int = 20
    pct_treated: float = 0.2
    gamma: float = 2.0
    delta_het: float = 1.0
    theta: float = 0.25
    n: int = 1000
    reps: int = 200
    seed: int = 0
    noise_sd: float = 1.0

    def __post_init__(self):
        if self.p < 2 or self.p % 2:
            raise ValueError("p must be an even integer >= 2")
        if not 0 < self.pct_treated < 1:
            raise ValueError("pct_treated must be in (0, 1)")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.delta_het < 0 or self.noise_sd < 0:
            raise ValueError("delta_het and noise_sd must be nonnegative")
        if not 0 <= self.theta <= 1:
            raise ValueError("theta must be in [0, 1]")
        if self.n < 4 or self.reps < 1:
            raise ValueError("n must be >= 4 and reps >= 1")

    @classmethod
    def from_levels(cls, p: int, pct_treated: float, gamma="med", delta="high", **kw) -> "ScenarioConfig":
        """Resolve named overlap and heterogeneity levels (numbers pass through)."""
        row = LEVEL_TABLE.get((round(float(pct_treated), 2), int(p)))
        if isinstance(gamma, str):
            if row is None:
                raise ValueError(f"no table row for pct_treated={pct_treated}, p={p}")
            gamma = row["gamma"][gamma]
        if isinstance(delta, str):
            if row is None:
                raise ValueError(f"no table row for pct_treated={pct_treated}, p={p}")
            delta = row["delta"][delta]
        return cls(p=int(p), pct_treated=float(pct_treated), gamma=float(gamma), delta_het=float(delta), **kw)

    @property
    def label(self) -> str:
        return (f"p={self.p},treated={self.pct_treated:g},gamma={self.gamma:g},"
                f"delta={self.delta_het:g},theta={self.theta:g},n={self.n}")


@dataclass(frozen=True)
class Truth:
    alpha: np.ndarray  # intercept first
    beta0: np.ndarray  # control outcome model, intercept first
    beta1: np.ndarray
    modifiers: tuple
    non_modifiers: tuple
    ate: float
    e: np.ndarray
    mu0: np.ndarray
    mu1: np.ndarray


# --------------------------------------------------------------------------
# data generation


def truncated_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Standard normal truncated to [-3, 3], rescaled to unit variance."""
    u = rng.random(size)
    return truncnorm.ppf(u, -TRUNC, TRUNC) / np.sqrt(_TRUNC_VAR)


def covariates(V: np.ndarray) -> np.ndarray:
    h = V.shape[1] // 2
    return np.hstack([V[:, :h], (V[:, h:] < 0).astype(float)])


def modifier_indices(p: int, theta: float) -> tuple:
    """Evenly spread effect modifiers, ``round(theta * p)`` of them."""
    M = int(round(theta * p))
    return tuple(int(np.floor((k + 0.5) * p / M)) for k in range(M))


def coefficients(p: int, gamma: float, delta: float, theta: float) -> tuple:
    """Slopes ``(alpha[1:], beta1[1:], modifiers)``.

    Magnitudes cycle separately within the modifiers and within the
    non-modifiers, so each group sees every propensity magnitude.  The k-th
    column of a group gets ``ALPHA_MAGNITUDES[k % 4] / gamma``; signs
    alternate by column index.  Modifier k gets
    ``0.25 +/- BETA_LEVELS[k % 4] * delta`` with alternating sign; all other
    outcome slopes are 0.25.
    """
    mods = modifier_indices(p, theta)
    others = [j for j in range(p) if j not in mods]
    level = np.zeros(p, dtype=int)
    for group in (mods, others):
        for k, j in enumerate(group):
            level[j] = k % 4
    sign = np.where(np.arange(p) % 2 == 0, 1.0, -1.0)
    alpha = sign * np.asarray(ALPHA_MAGNITUDES)[level] / gamma
    beta = np.full(p, 0.25)
    for k, j in enumerate(mods):
        beta[j] = 0.25 + (-1.0) ** k * BETA_LEVELS[k % 4] * delta
    return alpha, beta, mods


@functools.lru_cache(maxsize=64)
def calibrate_intercept(p: int, gamma: float, pct_treated: float, theta: float) -> float:
    """Bisection on a fixed Monte Carlo sample so that the mean true
    propensity equals ``pct_treated``."""
    rng = stream(CALIBRATION_SEED, p)
    X = covariates(truncated_normal(rng, (CALIBRATION_DRAWS, p)))
    alpha, _, _ = coefficients(p, gamma, 0.0, theta)
    lin = X @ alpha
    lo, hi = -50.0, 50.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if expit(mid + lin).mean() < pct_treated:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return 0.5 * (lo + hi)


def true_ate(cfg: ScenarioConfig) -> float:
    _, beta, mods = coefficients(cfg.p, cfg.gamma, cfg.delta_het, cfg.theta)
    h = cfg.p // 2
    return 1.0 + sum((beta[j] - 0.25) * 0.5 for j in mods if j >= h)


def generate_scenario(cfg: ScenarioConfig, rep: int):
    """``(Dataset, Truth)`` for replicate ``rep``; fully determined by
    ``(cfg, rep)``."""
    rng = stream(cfg.seed, rep)
    X = covariates(truncated_normal(rng, (cfg.n, cfg.p)))
    alpha, beta, mods = coefficients(cfg.p, cfg.gamma, cfg.delta_het, cfg.theta)
    a0 = calibrate_intercept(cfg.p, float(cfg.gamma), float(cfg.pct_treated), float(cfg.theta))
    e = expit(a0 + X @ alpha)
    z = (rng.random(cfg.n) < e).astype(float)
    mu0 = X @ np.full(cfg.p, 0.25)
    mu1 = 1.0 + X @ beta
    eps = rng.standard_normal(cfg.n) * cfg.noise_sd
    y = np.where(z == 1, mu1, mu0) + eps
    truth = Truth(
        alpha=np.concatenate([[a0], alpha]),
        beta0=np.concatenate([[0.0], np.full(cfg.p, 0.25)]),
        beta1=np.concatenate([[1.0], beta]),
        modifiers=mods,
        non_modifiers=tuple(j for j in range(cfg.p) if j not in mods),
        ate=true_ate(cfg),
        e=e,
        mu0=mu0,
        mu1=mu1,
    )
    return Dataset(z=z, X=X, y=y), truth


# --------------------------------------------------------------------------
# error decomposition


def decompose_error(w, data: Dataset, truth: Truth) -> dict:
    """Split ``tau_hat - ATE`` into the estimand-mismatch term, the
    finite-sample term and the outcome-noise term (all with ``1/n``)."""
    wv = w.w if isinstance(w, WeightSolution) else np.asarray(w, dtype=float)
    z = data.z
    n = data.n
    mu0, mu1 = truth.mu0, truth.mu1
    eps = data.y - np.where(z == 1, mu1, mu0)
    mismatch = np.sum(wv * z * mu1 - mu1) / n - np.sum(wv * (1 - z) * mu0 - mu0) / n
    sampling = np.mean(mu1 - mu0) - truth.ate
    noise = np.sum(wv * z * eps) / n - np.sum(wv * (1 - z) * eps) / n
    tau_hat = np.sum(wv * z * data.y) / n - np.sum(wv * (1 - z) * data.y) / n
    return {
        "mismatch": float(mismatch),
        "sampling": float(sampling),
        "noise": float(noise),
        "total": float(tau_hat - truth.ate),
    }


# --------------------------------------------------------------------------
# estimator panel

SIM_DISPERSION = Dispersion.quadratic(nonneg=True)

Estimator = Callable[[Dataset, Truth, int], float]


def _est_ipw_ate(data, truth, seed):
    return comparators.ipw_ate(data, comparators.fit_logistic_ps(data).e_hat)


def _est_ipw_ato(data, truth, seed):
    return comparators.ipw_ato(data, comparators.fit_logistic_ps(data).e_raw)


def _est_direct(data, truth, seed):
    ws = fit_weights(data, BalancePartition.from_g(data.p, ()), EstimandSpec(), SIM_DISPERSION, DEFAULT_CONFIG)
    if not ws.feasible:
        raise InfeasibleError("direct balancing infeasible")
    return weighted_effect(ws, data)


def _est_minimal(data, truth, seed):
    ws = comparators.minimal_weights_grid(data, EstimandSpec(), SIM_DISPERSION)
    if not ws.feasible:
        raise InfeasibleError("minimal weights infeasible on the delta grid")
    return comparators.minimal_effect(data, ws)


def _est_prtbw_true(data, truth, seed):
    g = truth.non_modifiers
    ws = fit_weights(data, BalancePartition.from_g(data.p, g), EstimandSpec(), SIM_DISPERSION, DEFAULT_CONFIG)
    if not ws.feasible:
        raise InfeasibleError("infeasible with the true g")
    return weighted_effect(ws, data)


def _est_prtbw_design(data, truth, seed):
    try:
        sel = select_g_adaptive(data, (), EstimandSpec(), SIM_DISPERSION, DESIGN)
    except RelaxedPositivityError as exc:
        raise InfeasibleError(str(exc)) from exc
    return weighted_effect(sel.final_weights, data)


def _est_prtbw_model(data, truth, seed):
    return crossfit_effect(data, EstimandSpec(), SIM_DISPERSION, seed=seed)["tau_hat"]


PANEL: Dict[str, Estimator] = {
    "ipw_ate": _est_ipw_ate,
    "ipw_ato": _est_ipw_ato,
    "direct": _est_direct,
    "minimal": _est_minimal,
    "prtbw_true": _est_prtbw_true,
    "prtbw_design": _est_prtbw_design,
    "prtbw_model": _est_prtbw_model,
}


def resolve_panel(names: Sequence[str]) -> Dict[str, Estimator]:
    unknown = [nm for nm in names if nm not in PANEL]
    if unknown:
        raise ValueError(f"unknown estimators {unknown}; choose from {sorted(PANEL)}")
    return {nm: PANEL[nm] for nm in names}


# --------------------------------------------------------------------------
# study runner


def _run_replicate(sid: int, cfg: ScenarioConfig, rep: int, panel: Mapping[str, Estimator]) -> List[dict]:
    data, truth = generate_scenario(cfg, rep)
    rows = []
    for name, fn in panel.items():
        rec = {"scenario": sid, "label": cfg.label, "rep": rep, "estimator": name,
               "estimate": float("nan"), "feasible": False, "true_ate": truth.ate, "error": ""}
        try:
            val = float(fn(data, truth, cfg.seed * 100003 + rep))
            rec["estimate"] = val
            rec["feasible"] = bool(np.isfinite(val))
        except (InfeasibleError, RelaxedPositivityError) as exc:
            rec["error"] = f"infeasible: {exc}"
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            logger.warning("scenario %d rep %d %s failed: %s", sid, rep, name, exc)
            rec["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(rec)
    return rows


def summarize(records: pd.DataFrame) -> pd.DataFrame:
    """MSE, absolute bias, empirical SD and feasibility rate per scenario and
    estimator, over each estimator's feasible replicates."""
    out = []
    for (sid, name), grp in records.groupby(["scenario", "estimator"], sort=True):
        ok = grp[grp["feasible"]]
        err = (ok["estimate"] - ok["true_ate"]).to_numpy()
        k = err.size
        out.append({
            "scenario": sid,
            "label": grp["label"].iloc[0],
            "estimator": name,
            "reps": len(grp),
            "n_feasible": k,
            "feasibility_rate": k / len(grp),
            "mse": float(np.mean(err ** 2)) if k else float("nan"),
            "bias": float(np.mean(err)) if k else float("nan"),
            "abs_bias": float(abs(np.mean(err))) if k else float("nan"),
            "sd": float(np.std(ok["estimate"], ddof=1)) if k > 1 else float("nan"),
            "mc_se": float(np.std(err, ddof=1) / np.sqrt(k)) if k > 1 else float("nan"),
        })
    return pd.DataFrame(out)


def run_study(grid: Sequence[ScenarioConfig], panel: Mapping[str, Estimator], threads: int = 1):
    """Run every replicate of every scenario through the panel.

    Returns ``(replicates, metrics)`` data frames.  Replicate failures are
    recorded and never abort the grid; records are sorted so output does
    not depend on scheduling.
    """
    if not panel:
        raise ValueError("estimator panel is empty")
    tasks = [(sid, cfg, rep) for sid, cfg in enumerate(grid) for rep in range(cfg.reps)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            chunks = list(ex.map(lambda t: _run_replicate(t[0], t[1], t[2], panel), tasks))
    else:
        chunks = [_run_replicate(sid, cfg, rep, panel) for sid, cfg, rep in tasks]
    order = {nm: i for i, nm in enumerate(panel)}
    rows = sorted(itertools.chain.from_iterable(chunks), key=lambda r: (r["scenario"], r["rep"], order[r["estimator"]]))
    reps = pd.DataFrame(rows)
    return reps, summarize(reps)


# --------------------------------------------------------------------------
# config grids

_GRID_KEYS = {"p", "pct_treated", "gamma", "delta", "theta", "n", "reps", "seed", "noise_sd"}


def parse_grid(settings: Mapping[str, str]) -> List[ScenarioConfig]:
    """Scenario grid from key=value settings; comma-separated values expand
    into the Cartesian product.  ``gamma`` and ``delta`` also accept level
    names from ``LEVEL_TABLE``."""
    unknown = set(settings) - _GRID_KEYS - {"estimators", "threads", "out"}
    if unknown:
        raise ValueError(f"unknown simulation keys {sorted(unknown)}")
    defaults = {"p": "20", "pct_treated": "0.2", "gamma": "med", "delta": "high", "theta": "0.25",
                "n": "1000", "reps": "200", "seed": "0", "noise_sd": "1"}
    vals = {k: [v.strip() for v in str(settings.get(k, defaults[k])).split(",") if v.strip()]
            for k in defaults}
    grid = []
    keys = list(defaults)
    for combo in itertools.product(*(vals[k] for k in keys)):
        kv = dict(zip(keys, combo))

        def level(s):
            try:
                return float(s)
            except ValueError:
                return s

        grid.append(ScenarioConfig.from_levels(
            int(kv["p"]), float(kv["pct_treated"]), level(kv["gamma"]), level(kv["delta"]),
            theta=float(kv["theta"]), n=int(kv["n"]), reps=int(kv["reps"]), seed=int(kv["seed"]),
            noise_sd=float(kv["noise_sd"])))
    return grid
