"""Dual minimisation, primal weight recovery and an LP feasibility oracle."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import (
    BalancePartition,
    Dataset,
    Dispersion,
    DispersionKind,
    DualSolution,
    EstimandSpec,
    SolveStatus,
    WeightSolution,
)
from .problems import ConstraintSystem, DualObjective, build_system, dual_objective

logger = logging.getLogger(__name__)

ARMIJO_C = 1e-4
BACKTRACK = 0.5
MIN_STEP = 1e-20


class NumericError(ArithmeticError):
    def __init__(self, message: str, payload: Optional[dict] = None):
        super().__init__(message)
        self.payload = payload or {}


@dataclass(frozen=True)
class SolverConfig:
    tol_balance: float = 1e-8
    max_iter: int = 500
    theta_max: float = 1e6
    ridge: float = 1e-10

    def __post_init__(self):
        for name in ("tol_balance", "max_iter", "theta_max", "ridge"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


DEFAULT_CONFIG = SolverConfig()


def _finite_loss(obj: DualObjective, theta: np.ndarray) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        val = obj.loss(theta)
    return val if np.isfinite(val) else np.inf


def _newton_direction(H: np.ndarray, g: np.ndarray, ridge: float) -> Optional[np.ndarray]:
    k = H.shape[0]
    for jitter in (ridge, ridge * 1e4, ridge * 1e8):
        try:
            step = -np.linalg.solve(H + jitter * np.eye(k), g)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(step)) and step @ g < 0:
            return step
    return None


def _solve_linear(obj: DualObjective, cfg: SolverConfig) -> tuple:
    """Signed quadratic dispersion: the dual is exactly quadratic."""
    H = obj.hess(np.zeros(obj.dim))
    theta = np.linalg.lstsq(H, -obj.b, rcond=None)[0]
    g = obj.grad(theta)
    gn = float(np.max(np.abs(g))) if g.size else 0.0
    if gn <= cfg.tol_balance:
        return theta, SolveStatus.CONVERGED, gn, 1
    # one refinement sweep for round-off before declaring inconsistency
    theta = theta + np.linalg.lstsq(H, -g, rcond=None)[0]
    g = obj.grad(theta)
    gn = float(np.max(np.abs(g)))
    status = SolveStatus.CONVERGED if gn <= cfg.tol_balance else SolveStatus.INFEASIBLE
    return theta, status, gn, 2


def _polish(obj, theta, g, gn, loss, cfg, steps=3):
    # a few undamped Newton steps past the tolerance push the balance rows
    # to rounding level; each is kept only if the gradient shrinks
    for _ in range(steps):
        if gn <= 1e-14:
            break
        step = _newton_direction(obj.hess(theta), g, cfg.ridge)
        if step is None:
            break
        cand = theta + step
        cand_loss = _finite_loss(obj, cand)
        if not np.isfinite(cand_loss):
            break
        cand_g = obj.grad(cand)
        cand_gn = float(np.max(np.abs(cand_g)))
        if not cand_gn < gn:
            break
        theta, g, gn, loss = cand, cand_g, cand_gn, cand_loss
    return theta, g, gn, loss


def minimize_dual(obj: DualObjective, cfg: SolverConfig = DEFAULT_CONFIG, init=None):
    """Damped Newton with Armijo backtracking.

    Returns ``(theta, status, grad_inf_norm, iterations, loss)``.
    """
    d = obj.d
    if d.kind is DispersionKind.QUADRATIC and not d.nonneg:
        theta, status, gn, it = _solve_linear(obj, cfg)
        return theta, status, gn, it, obj.loss(theta)

    theta = np.zeros(obj.dim) if init is None else np.array(init, dtype=float)
    loss = _finite_loss(obj, theta)
    if not np.isfinite(loss):
        raise NumericError("dual loss is not finite at the starting point", {"theta": theta})
    g = obj.grad(theta)
    for it in range(cfg.max_iter):
        gn = float(np.max(np.abs(g))) if g.size else 0.0
        if not np.isfinite(gn):
            raise NumericError("non-finite dual gradient", {"iteration": it, "theta": theta})
        if gn <= cfg.tol_balance:
            theta, g, gn, loss = _polish(obj, theta, g, gn, loss, cfg)
            return theta, SolveStatus.CONVERGED, gn, it, loss
        step = _newton_direction(obj.hess(theta), g, cfg.ridge)
        if step is None:
            step = -g
        slope = float(step @ g)
        t = 1.0
        accepted = False
        while t >= MIN_STEP:
            cand = theta + t * step
            cand_loss = _finite_loss(obj, cand)
            if cand_loss <= loss + ARMIJO_C * t * slope:
                accepted = True
                break
            t *= BACKTRACK
        if not accepted:
            # near the optimum the loss decrease drops below float resolution;
            # accept the full step if it still shrinks the gradient
            cand = theta + step
            cand_loss = _finite_loss(obj, cand)
            cand_g = obj.grad(cand)
            if (np.isfinite(cand_loss) and cand_loss <= loss + 1e-12 * (1.0 + abs(loss))
                    and np.max(np.abs(cand_g)) < gn):
                theta, loss, g = cand, cand_loss, cand_g
                continue
            logger.debug("line search stalled at iteration %d (|grad| = %.3g)", it, gn)
            return theta, SolveStatus.ITER_LIMIT, gn, it, loss
        theta, loss = cand, cand_loss
        g = obj.grad(theta)
        if np.max(np.abs(theta)) > cfg.theta_max:
            gn = float(np.max(np.abs(g)))
            return theta, SolveStatus.INFEASIBLE, gn, it + 1, loss
    gn = float(np.max(np.abs(g))) if g.size else 0.0
    status = SolveStatus.CONVERGED if gn <= cfg.tol_balance else SolveStatus.ITER_LIMIT
    return theta, status, gn, cfg.max_iter, loss


def solve_dual(obj: DualObjective, sys: ConstraintSystem, cfg: SolverConfig = DEFAULT_CONFIG,
               init=None) -> DualSolution:
    theta, status, gn, it, loss = minimize_dual(obj, cfg, init)
    a0, a1, gam = sys.split_theta(theta)
    return DualSolution(alpha0=a0, alpha1=a1, gamma=gam, status=status,
                        grad_inf_norm=gn, iterations=it, loss=loss)


def _ess(w: np.ndarray) -> float:
    s2 = float(np.sum(w * w))
    return float(np.sum(w)) ** 2 / s2 if s2 > 0 else 0.0


def _assemble(w_a: np.ndarray, sys: ConstraintSystem, d: Dispersion, feasible: bool,
              dual: Optional[DualSolution]) -> WeightSolution:
    n = sys.analysis_mask.shape[0]
    w = np.zeros(n)
    w[sys.analysis_mask] = w_a
    t = sys.z == 1
    g_raw = sys.F_raw[:, 2 * sys.K:]
    st = float(np.sum(w_a[t]))
    if sys.L and st > 0:
        profile = w_a[t] @ g_raw[t] / st
    else:
        profile = np.zeros(sys.L)
    return WeightSolution(
        w=w,
        feasible=feasible,
        target_profile_g=profile,
        balance_residuals=sys.residuals(w_a, standardized=False),
        standardized_residuals=sys.residuals(w_a, standardized=True),
        ess_treated=_ess(w_a[t]),
        ess_control=_ess(w_a[~t]),
        partition=sys.partition,
        estimand=sys.estimand,
        dispersion=d,
        dual=dual,
    )


def recover_weights(sol: DualSolution, sys: ConstraintSystem, d: Dispersion,
                    tol_balance: float = DEFAULT_CONFIG.tol_balance) -> WeightSolution:
    """Primal weights ``rho'(eta)`` from a converged dual solution."""
    if not sol.converged:
        raise ValueError(f"cannot recover weights from a dual solution with status {sol.status.value}")
    w_a = d.rho_prime(sys.F @ sol.theta)
    ws = _assemble(w_a, sys, d, True, sol)
    feasible = ws.max_residual <= max(tol_balance, 1e-6)
    if not feasible:
        ws = _assemble(w_a, sys, d, False, sol)
    return ws


def fit_weights(data: Dataset, part: BalancePartition, est: Optional[EstimandSpec] = None,
                d: Dispersion = Dispersion(), cfg: SolverConfig = DEFAULT_CONFIG,
                sys: Optional[ConstraintSystem] = None) -> WeightSolution:
    """Build, solve and recover in one call.

    Infeasible or non-converged problems yield ``feasible=False`` with NaN
    weights rather than raising.
    """
    sys = sys if sys is not None else build_system(data, part, est)
    sol = solve_dual(dual_objective(sys, d), sys, cfg)
    if sol.converged:
        return recover_weights(sol, sys, d, cfg.tol_balance)
    ws = _assemble(np.full(sys.m, np.nan), sys, d, False, sol)
    return ws


def fit_arm(sys: ConstraintSystem, arm: int, d: Dispersion, cfg: SolverConfig = DEFAULT_CONFIG):
    """Direct balancing for one arm on its own: match that arm's weighted
    c-means to the target.  Only meaningful when ``g`` is empty.

    Returns ``(weights for the arm's analysis units, status)``.
    """
    K = sys.K
    rows = sys.z == arm
    cols = slice(K, 2 * K) if arm == 1 else slice(0, K)
    F = sys.F[rows][:, cols]
    obj = DualObjective(F, sys.b[cols], sys.m, d)
    theta, status, _, _, _ = minimize_dual(obj, cfg)
    return obj.weights(theta), status


# --------------------------------------------------------------------------
# LP feasibility oracle


class Verdict(str, enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Feasibility:
    verdict: Verdict
    witness: Optional[np.ndarray] = None
    violated_row: Optional[int] = None
    violated_label: Optional[str] = None
    phase1_objective: float = float("nan")
    dropped_rows: tuple = ()
    pivots: int = 0

    @property
    def feasible(self) -> bool:
        return self.verdict is Verdict.FEASIBLE


def phase_one(A: np.ndarray, b: np.ndarray, max_pivots: Optional[int] = None,
              pivot_tol: float = 1e-11):
    """Phase-1 simplex on ``{A x = b, x >= 0}`` with a dense tableau.

    Entering column: most negative reduced cost, lowest index on ties; after
    a run of degenerate pivots the rule switches to Bland's (lowest index
    with negative reduced cost) which rules out cycling.  Leaving row: minimum
    ratio, ties to the lowest basic-variable index.

    Returns ``(x, artificial_values, basis, dropped_rows, pivots, stalled)``.
    """
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    r, n = A.shape
    sign = np.where(b < 0, -1.0, 1.0)
    A = A * sign[:, None]
    b = b * sign
    # row equilibration; feasibility is scale-free
    rs = np.max(np.abs(A), axis=1)
    rs = np.where(rs > 0, rs, 1.0)
    A /= rs[:, None]
    b /= rs

    T = np.zeros((r + 1, n + r + 1))
    T[:r, :n] = A
    T[:r, n:n + r] = np.eye(r)
    T[:r, -1] = b
    T[r, :n] = -A.sum(axis=0)
    T[r, -1] = -b.sum()
    basis = np.arange(n, n + r)
    max_pivots = max_pivots or 50 * (n + r)
    degenerate_run = 0
    bland = False
    pivots = 0
    stalled = False
    while True:
        red = T[r, :n + r]
        neg = np.flatnonzero(red < -1e-12)
        if neg.size == 0:
            break
        if pivots >= max_pivots:
            stalled = True
            break
        if bland:
            j = int(neg[0])
        else:
            j = int(np.argmin(red))  # argmin returns the lowest index on ties
        col = T[:r, j]
        pos = np.flatnonzero(col > pivot_tol)
        if pos.size == 0:
            # unbounded direction cannot happen in phase 1 (objective >= 0)
            stalled = True
            break
        ratios = T[pos, -1] / col[pos]
        best = ratios.min()
        ties = pos[ratios <= best + 1e-14 * max(1.0, abs(best))]
        i = int(ties[np.argmin(basis[ties])])
        if best <= 1e-14:
            degenerate_run += 1
            if degenerate_run > 2 * r:
                bland = True
        else:
            degenerate_run = 0
        T[i] /= T[i, j]
        piv_col = T[:, j].copy()
        piv_col[i] = 0.0
        T -= np.outer(piv_col, T[i])
        basis[i] = j
        pivots += 1

    # drive zero-level artificials out of the basis; rows where that is
    # impossible are linearly dependent on the others
    dropped = []
    for i in range(r):
        if basis[i] >= n and abs(T[i, -1]) <= 1e-9:
            cand = np.flatnonzero(np.abs(T[i, :n]) > 1e-9)
            cand = [j for j in cand if j not in set(basis)]
            if cand:
                j = int(cand[0])
                T[i] /= T[i, j]
                piv_col = T[:, j].copy()
                piv_col[i] = 0.0
                T -= np.outer(piv_col, T[i])
                basis[i] = j
            else:
                dropped.append(i)
    x = np.zeros(n + r)
    x[basis] = T[:r, -1]
    art = np.zeros(r)
    for i in range(r):
        if basis[i] >= n:
            art[basis[i] - n] = T[i, -1] * rs[basis[i] - n]
    return np.maximum(x[:n], 0.0), np.abs(art), basis, tuple(dropped), pivots, stalled


def check_feasibility(sys: ConstraintSystem, nonneg: bool = True, tol: float = 1e-7) -> Feasibility:
    """Exact feasibility of ``{A w = b, w >= 0}`` on the standardized system.

    With ``nonneg=False`` (signed quadratic weights) feasibility reduces to
    consistency of the linear system, decided by least squares.
    """
    A, b = sys.A, sys.b
    if not nonneg:
        w, *_ = np.linalg.lstsq(A, b, rcond=None)
        res = A @ w - b
        k = int(np.argmax(np.abs(res)))
        if np.max(np.abs(res)) <= tol:
            return Feasibility(Verdict.FEASIBLE, witness=w, phase1_objective=float(np.sum(np.abs(res))))
        return Feasibility(Verdict.INFEASIBLE, violated_row=k, violated_label=sys.row_labels[k],
                           phase1_objective=float(np.sum(np.abs(res))))
    x, art, _, dropped, pivots, stalled = phase_one(A, b)
    obj = float(art.sum())
    if stalled:
        return Feasibility(Verdict.UNKNOWN, phase1_objective=obj, dropped_rows=dropped, pivots=pivots)
    if obj > tol:
        k = int(np.argmax(art))
        return Feasibility(Verdict.INFEASIBLE, violated_row=k, violated_label=sys.row_labels[k],
                           phase1_objective=obj, dropped_rows=dropped, pivots=pivots)
    if np.max(np.abs(A @ x - b)) > 1e-9:
        # accumulated round-off in the tableau; polish on the active support
        support = x > 0
        xs, *_ = np.linalg.lstsq(A[:, support], b, rcond=None)
        x2 = np.zeros_like(x)
        x2[support] = xs
        if np.all(x2 >= 0) and np.max(np.abs(A @ x2 - b)) <= 1e-9:
            x = x2
        else:
            return Feasibility(Verdict.UNKNOWN, phase1_objective=obj, dropped_rows=dropped, pivots=pivots)
    witness = np.zeros(sys.analysis_mask.shape[0])
    witness[sys.analysis_mask] = x
    if dropped:
        logger.info("dropped %d redundant constraint rows", len(dropped))
    return Feasibility(Verdict.FEASIBLE, witness=witness, phase1_objective=obj,
                       dropped_rows=dropped, pivots=pivots)
