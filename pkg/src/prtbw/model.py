"""Domain types and the dispersion calculus behind the balancing dual.

A dispersion ``D`` on the weights fixes, through ``h(t) = D(1 - t)``, a
strictly concave function ``rho`` whose derivative maps linear predictors
(dual coefficients times basis values) to unit weights.  Two families are
supported:

* entropy, ``D(t) = t log t``: ``rho(t) = -exp(-t - 1)``, ``rho'(t) = exp(-t - 1)``
* quadratic, ``D(t) = t**2``: ``rho(t) = -t**2 / 4``, ``rho'(t) = -t / 2``

With ``nonneg=True`` the quadratic family uses the hinge ``max(-t/2, 0)`` so
that the primal weights are nonnegative.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class DomainError(ValueError):
    """Raised when a dispersion function is evaluated outside its domain."""


class DispersionKind(str, enum.Enum):
    ENTROPY = "entropy"
    QUADRATIC = "quadratic"


class SolveStatus(str, enum.Enum):
    CONVERGED = "converged"
    INFEASIBLE = "infeasible"
    ITER_LIMIT = "iter_limit"


class EstimandKind(str, enum.Enum):
    ATE = "ATE"
    ATT = "ATT"
    WATE = "WATE"
    TRANSPORT = "Transport"


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dispersion:
    kind: DispersionKind = DispersionKind.QUADRATIC
    nonneg: bool = True

    @classmethod
    def entropy(cls) -> "Dispersion":
        return cls(DispersionKind.ENTROPY, nonneg=True)

    @classmethod
    def quadratic(cls, nonneg: bool = True) -> "Dispersion":
        return cls(DispersionKind.QUADRATIC, nonneg=nonneg)

    @classmethod
    def parse(cls, name: str) -> "Dispersion":
        name = name.strip().lower()
        if name == "entropy":
            return cls.entropy()
        if name == "quadratic":
            return cls.quadratic(True)
        if name in ("quadratic-signed", "quadratic_signed"):
            return cls.quadratic(False)
        raise ValueError(f"unknown dispersion {name!r}")

    @property
    def nonnegative_weights(self) -> bool:
        return self.kind is DispersionKind.ENTROPY or self.nonneg

    @property
    def label(self) -> str:
        if self.kind is DispersionKind.QUADRATIC and not self.nonneg:
            return "quadratic-signed"
        return self.kind.value

    # Vectorised evaluations; no domain checks (callers in the solver pass
    # finite linear predictors and handle overflow through the line search).

    def rho(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind is DispersionKind.ENTROPY:
            with np.errstate(over="ignore"):
                return -np.exp(-t - 1.0)
        if self.nonneg:
            return np.where(t <= 0.0, -0.25 * t * t, 0.0)
        return -0.25 * t * t

    def rho_prime(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind is DispersionKind.ENTROPY:
            with np.errstate(over="ignore"):
                return np.exp(-t - 1.0)
        if self.nonneg:
            return np.maximum(-0.5 * t, 0.0)
        return -0.5 * t

    def rho_double_prime(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind is DispersionKind.ENTROPY:
            with np.errstate(over="ignore"):
                return -np.exp(-t - 1.0)
        if self.nonneg:
            # the kink at 0 is treated as active so that theta = 0 (all
            # weights zero) still yields a useful Newton step
            return np.where(t <= 0.0, -0.5, 0.0)
        return np.full_like(t, -0.5)

    def dispersion(self, w):
        """The primal penalty ``D(w)``, summed."""
        w = np.asarray(w, dtype=float)
        if self.kind is DispersionKind.ENTROPY:
            return float(np.sum(np.where(w > 0, w * np.log(np.where(w > 0, w, 1.0)), 0.0)))
        return float(np.sum(w * w))


def _check_scalar(t: float) -> float:
    t = float(t)
    if not math.isfinite(t):
        raise DomainError(f"dispersion evaluated at non-finite point {t!r}")
    return t


def rho_prime(d: Dispersion, t: float) -> float:
    """Weight implied by a linear predictor ``t``."""
    return float(d.rho_prime(_check_scalar(t)))


def rho(d: Dispersion, t: float) -> float:
    return float(d.rho(_check_scalar(t)))


def rho_double_prime(d: Dispersion, t: float) -> float:
    return float(d.rho_double_prime(_check_scalar(t)))


@dataclass(frozen=True)
class Dataset:
    """Unit-level data.

    ``z`` and ``y`` may hold NaN only on target-population units (``r == 0``)
    of a transport dataset; everything else must be finite.
    """

    z: np.ndarray
    X: np.ndarray
    y: Optional[np.ndarray] = None
    r: Optional[np.ndarray] = None
    unit_ids: Optional[np.ndarray] = None
    columns: tuple = ()

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise ValueError("X must be a 2-d matrix")
        n, p = X.shape
        z = np.array(self.z, dtype=float).ravel()
        if z.shape[0] != n:
            raise ValueError(f"z has length {z.shape[0]}, expected {n}")
        r = None
        if self.r is not None:
            r = np.array(self.r, dtype=float).ravel()
            if r.shape[0] != n:
                raise ValueError(f"r has length {r.shape[0]}, expected {n}")
            if not np.all(np.isin(r, (0.0, 1.0))):
                raise ValueError("r must be a 0/1 indicator")
            r = r.astype(int)
        analysis = np.ones(n, dtype=bool) if r is None else r == 1
        if not np.all(np.isfinite(X)):
            bad = np.argwhere(~np.isfinite(X))[0]
            raise ValueError(f"non-finite covariate at row {bad[0]}, column {bad[1]}")
        za = z[analysis]
        if not np.all(np.isin(za, (0.0, 1.0))):
            raise ValueError("z must be a 0/1 indicator on analysis units")
        if not (np.any(za == 1) and np.any(za == 0)):
            raise ValueError("both treatment arms must be present among analysis units")
        y = None
        if self.y is not None:
            y = np.array(self.y, dtype=float).ravel()
            if y.shape[0] != n:
                raise ValueError(f"y has length {y.shape[0]}, expected {n}")
            if not np.all(np.isfinite(y[analysis])):
                i = int(np.flatnonzero(analysis & ~np.isfinite(y))[0])
                raise ValueError(f"non-finite outcome at row {i}")
        if self.unit_ids is None:
            ids = np.arange(n)
        else:
            ids = np.asarray(self.unit_ids)
            if ids.shape[0] != n:
                raise ValueError("unit_ids length mismatch")
        columns = tuple(self.columns) if self.columns else tuple(f"x{j + 1}" for j in range(p))
        if len(columns) != p:
            raise ValueError("column names do not match X")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "z", _frozen(np.where(analysis, z, np.nan) if r is not None else z))
        object.__setattr__(self, "y", None if y is None else _frozen(y))
        object.__setattr__(self, "r", None if r is None else _frozen(r))
        object.__setattr__(self, "unit_ids", ids)
        object.__setattr__(self, "columns", columns)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def analysis_mask(self) -> np.ndarray:
        if self.r is None:
            return np.ones(self.n, dtype=bool)
        return self.r == 1

    def subset(self, idx) -> "Dataset":
        """Rows ``idx`` (duplicates allowed, as in bootstrap resamples)."""
        idx = np.asarray(idx)
        return Dataset(
            z=self.z[idx],
            X=self.X[idx],
            y=None if self.y is None else self.y[idx],
            r=None if self.r is None else self.r[idx],
            unit_ids=self.unit_ids[idx],
            columns=self.columns,
        )

    def column_index(self, name) -> int:
        if isinstance(name, (int, np.integer)):
            if not 0 <= int(name) < self.p:
                raise IndexError(f"column {name} out of range")
            return int(name)
        try:
            return self.columns.index(name)
        except ValueError:
            raise KeyError(f"unknown covariate {name!r}") from None


@dataclass(frozen=True)
class BalancePartition:
    """Split of covariate columns into target-anchored ``c`` and
    between-arm-only ``g``.  The intercept is implicit and always in ``c``."""

    c_idx: tuple
    g_idx: tuple
    p: int

    def __post_init__(self):
        c = tuple(int(j) for j in self.c_idx)
        g = tuple(int(j) for j in self.g_idx)
        if set(c) & set(g):
            raise ValueError(f"columns {sorted(set(c) & set(g))} are in both c and g")
        if len(set(c)) != len(c) or len(set(g)) != len(g):
            raise ValueError("duplicate column in partition")
        if sorted(c + g) != list(range(self.p)):
            raise ValueError("partition must cover every covariate column exactly once")
        object.__setattr__(self, "c_idx", c)
        object.__setattr__(self, "g_idx", g)

    @classmethod
    def from_g(cls, p: int, g_idx: Sequence[int] = ()) -> "BalancePartition":
        g = tuple(int(j) for j in g_idx)
        return cls(tuple(j for j in range(p) if j not in g), g, p)

    @property
    def K(self) -> int:
        """Number of c functions including the intercept."""
        return len(self.c_idx) + 1

    @property
    def L(self) -> int:
        return len(self.g_idx)


@dataclass(frozen=True)
class EstimandSpec:
    kind: EstimandKind = EstimandKind.ATE
    h_values: Optional[np.ndarray] = None

    def __post_init__(self):
        kind = EstimandKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is EstimandKind.WATE:
            if self.h_values is None:
                raise ValueError("WATE requires tilting values h")
            h = np.asarray(self.h_values, dtype=float)
            if np.any(h < 0) or not np.all(np.isfinite(h)):
                raise ValueError("WATE tilting values must be finite and nonnegative")
            if not np.any(h > 0):
                raise ValueError("WATE tilting values are all zero")
            object.__setattr__(self, "h_values", _frozen(h.copy()))

    @classmethod
    def parse(cls, name: str, h_values=None) -> "EstimandSpec":
        lookup = {k.value.lower(): k for k in EstimandKind}
        try:
            kind = lookup[name.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown estimand {name!r}") from None
        return cls(kind, h_values)


@dataclass(frozen=True)
class DualSolution:
    alpha0: np.ndarray
    alpha1: np.ndarray
    gamma: np.ndarray
    status: SolveStatus
    grad_inf_norm: float
    iterations: int
    loss: float = float("nan")

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.alpha0, self.alpha1, self.gamma])

    @property
    def converged(self) -> bool:
        return self.status is SolveStatus.CONVERGED


@dataclass(frozen=True)
class WeightSolution:
    """Per-unit weights (zero off the analysis set) plus their certificate.

    ``balance_residuals`` are on the original covariate scale and ordered as
    the constraint rows: control c-rows, treated c-rows, g-rows.
    ``standardized_residuals`` are the same rows on the solver's internal
    scale, which is the scale tolerances refer to.
    """

    w: np.ndarray
    feasible: bool
    target_profile_g: np.ndarray
    balance_residuals: np.ndarray
    standardized_residuals: np.ndarray
    ess_treated: float
    ess_control: float
    partition: Optional[BalancePartition] = None
    estimand: Optional[EstimandSpec] = None
    dispersion: Optional[Dispersion] = None
    dual: Optional[DualSolution] = None
    extra: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        if self.standardized_residuals.size == 0:
            return 0.0
        return float(np.max(np.abs(self.standardized_residuals)))
