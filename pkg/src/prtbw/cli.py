"""Command-line front end.

Exit codes: 0 success, 2 infeasible balancing problem (the report carries
the LP diagnosis), 3 input error.  Every failure also writes
``reason.json`` to the output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import comparators, diagnostics, simlab
from .estimate import EstimateReport, InfeasibleError, bootstrap_ci, prtbw_pipeline
from .model import BalancePartition, Dataset, Dispersion, EstimandKind, EstimandSpec
from .problems import ProblemError, build_system
from .select import DESIGN, MODEL, RelaxedPositivityError, rare_binary_seed, select_g_adaptive, select_g_static
from .solver import check_feasibility, fit_weights

logger = logging.getLogger("prtbw")

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_INPUT = 3
TRIM = (0.1, 0.9)


class InputError(Exception):
    pass


class Infeasible(Exception):
    def __init__(self, message: str, report: Optional[dict] = None):
        super().__init__(message)
        self.report = report or {}


# --------------------------------------------------------------------------
# output helpers


def fmt(x) -> str:
    return format(float(x), ".17g")


def _encode(obj, indent=0) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        return "[" + ", ".join(_encode(v, indent + 1) for v in seq) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else "null"
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def dumps(obj) -> str:
    """JSON with every float printed to 17 significant digits."""
    return _encode(obj) + "\n"


def _write(path: str, text: str):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _write_csv(path: str, header: Sequence[str], rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _frame_csv(path: str, frame):
    _write_csv(path, list(frame.columns), frame.itertuples(index=False, name=None))


# --------------------------------------------------------------------------
# input


def read_config(path: str) -> Dict[str, str]:
    """Flat ``key=value`` lines; blank lines and ``#`` comments ignored."""
    out = {}
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise InputError(f"{path}:{lineno}: expected key=value")
                k, v = line.split("=", 1)
                out[k.strip().replace("-", "_")] = v.strip()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    return out


def _split_names(s: Optional[str]) -> List[str]:
    if s is None:
        return []
    return [t.strip() for t in s.split(",") if t.strip()]


def _to_float(cell: str, row: int, col: str, allow_missing: bool = False) -> float:
    cell = cell.strip()
    if cell == "" or cell.lower() in ("na", "nan"):
        if allow_missing:
            return float("nan")
        raise InputError(f"missing or non-finite value at row {row}, column {col!r}")
    try:
        v = float(cell)
    except ValueError:
        raise InputError(f"non-numeric value {cell!r} at row {row}, column {col!r}") from None
    if not math.isfinite(v):
        if allow_missing:
            return float("nan")
        raise InputError(f"non-finite value at row {row}, column {col!r}")
    return v


def parse_dataset(path: str, treatment: str, outcome: Optional[str] = None, population: Optional[str] = None,
                  covariates: Optional[Sequence[str]] = None, id_col: Optional[str] = None,
                  exclude: Sequence[str] = ()) -> Dataset:
    """Read a CSV with a header row into a validated Dataset.

    Rows are numbered from 1 for the first data line.  Treatment and outcome
    cells may be empty on target-population rows (population value 0).
    """
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise InputError(f"{path} is empty or has no header")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if any(cell.strip() for cell in r)]
    if not body:
        raise InputError(f"{path} has a header but no data rows")
    for i, r in enumerate(body, 1):
        if len(r) != len(header):
            raise InputError(f"row {i} has {len(r)} fields, header has {len(header)}")
    col = {h: j for j, h in enumerate(header)}
    roles = [c for c in (treatment, outcome, population, id_col) if c]
    for name in roles + list(covariates or []) + list(exclude):
        if name not in col:
            raise InputError(f"unknown column {name!r}; header is {header}")
    if covariates:
        cov = list(covariates)
    else:
        cov = [h for h in header if h not in roles and h not in exclude]
    if not cov:
        raise InputError("no covariate columns")

    r = None
    if population:
        r = np.array([_to_float(row[col[population]], i, population) for i, row in enumerate(body, 1)])
    target = np.zeros(len(body), dtype=bool) if r is None else (r == 0)
    z = np.array([_to_float(row[col[treatment]], i, treatment, allow_missing=bool(target[i - 1]))
                  for i, row in enumerate(body, 1)])
    y = None
    if outcome:
        y = np.array([_to_float(row[col[outcome]], i, outcome, allow_missing=bool(target[i - 1]))
                      for i, row in enumerate(body, 1)])
    X = np.array([[_to_float(row[col[c]], i, c) for c in cov] for i, row in enumerate(body, 1)])
    ids = np.array([row[col[id_col]].strip() for row in body]) if id_col else np.arange(len(body))
    try:
        return Dataset(z=z, X=X, y=y, r=r, unit_ids=ids, columns=tuple(cov))
    except ValueError as exc:
        raise InputError(str(exc)) from exc


# --------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser, outcome: bool = True):
    p.add_argument("--data", required=True, help="input CSV with a header row")
    p.add_argument("--treatment", default="z")
    if outcome:
        p.add_argument("--outcome", default=None)
    p.add_argument("--population", default=None, help="trial-membership column (1 = trial, 0 = target)")
    p.add_argument("--covariates", default=None, help="comma-separated covariate names (default: all others)")
    p.add_argument("--id", dest="id_col", default=None)
    p.add_argument("--estimand", default="ATE", help="ATE, ATT, WATE or Transport")
    p.add_argument("--h-column", default=None, help="tilting column for WATE")
    p.add_argument("--dispersion", default="quadratic", help="entropy, quadratic or quadratic-signed")
    p.add_argument("--g", default=None, help="comma-separated retargeted covariates")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prtbw", description="Partially retargeted balancing weights.")
    ap.add_argument("--config", default=None, help="key=value defaults; command-line flags override")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("weights", help="solve for weights and emit the balance certificate")
    _common(p)

    p = sub.add_parser("select", help="choose the retargeted set")
    _common(p)
    p.add_argument("--metric", choices=(DESIGN, MODEL), default=DESIGN)
    p.add_argument("--static", action="store_true", help="freeze the candidate order from one metric evaluation")
    p.add_argument("--seed-rare", type=float, default=None, help="pre-seed g with rare binary columns below this prevalence")

    for name in ("estimate", "transport"):
        p = sub.add_parser(name, help="point estimate with a bootstrap interval")
        _common(p)
        p.add_argument("--select", choices=("none", DESIGN, MODEL), default=DESIGN,
                       help="g-selection metric when --g is not given")
        p.add_argument("--static", action="store_true")
        p.add_argument("--B", type=int, default=500, help="bootstrap replicates (0 skips the interval)")
        p.add_argument("--ci", choices=("wald", "percentile"), default="wald")
        p.add_argument("--freeze-g", action="store_true", help="reuse the full-data g in every replicate")
        p.add_argument("--compare", default="", help="comparators: ipw,ato,minimal (estimate) or iow,trimmed (transport)")

    p = sub.add_parser("simulate", help="run a simulation grid")
    p.add_argument("--grid", default=None, help="key=value grid file (defaults to --config)")
    p.add_argument("--estimators", default=None)
    p.add_argument("--set", action="append", default=[], help="override a grid key, key=value")

    p = sub.add_parser("balance", help="diagnostics for a given weights file")
    _common(p)
    p.add_argument("--weights", required=True, help="CSV with unit_id,weight")
    return ap


def _apply_config(ap: argparse.ArgumentParser, argv: Sequence[str]):
    pre, _ = ap.parse_known_args(argv)
    if pre.config is None or pre.command == "simulate":
        return ap.parse_args(argv), {}
    cfg = read_config(pre.config)
    sub = ap._subparsers._group_actions[0].choices[pre.command]  # noqa: SLF001
    known = {a.dest for a in sub._actions} | {a.dest for a in ap._actions}  # noqa: SLF001
    unknown = set(cfg) - known
    if unknown:
        raise InputError(f"unknown config keys {sorted(unknown)}")
    typed = {}
    for action in list(sub._actions) + list(ap._actions):  # noqa: SLF001
        if action.dest in cfg:
            raw = cfg[action.dest]
            if isinstance(action, argparse._StoreTrueAction):  # noqa: SLF001
                typed[action.dest] = raw.lower() in ("1", "true", "yes")
            elif action.type is not None:
                typed[action.dest] = action.type(raw)
            else:
                typed[action.dest] = raw
    sub.set_defaults(**{k: v for k, v in typed.items() if k in {a.dest for a in sub._actions}})  # noqa: SLF001
    ap.set_defaults(**{k: v for k, v in typed.items() if k in {a.dest for a in ap._actions}})  # noqa: SLF001
    return ap.parse_args(argv), cfg


# --------------------------------------------------------------------------
# shared pieces


def _load(args) -> tuple:
    exclude = [args.h_column] if getattr(args, "h_column", None) else []
    data = parse_dataset(args.data, args.treatment, getattr(args, "outcome", None), args.population,
                         _split_names(args.covariates) or None, args.id_col, exclude)
    try:
        d = Dispersion.parse(args.dispersion)
        est_name = args.estimand
        if args.command == "transport":
            est_name = "Transport"
        h = None
        if est_name.strip().lower() == "wate":
            if not args.h_column:
                raise InputError("WATE needs --h-column")
            h = parse_dataset(args.data, args.treatment, args.h_column, args.population, None, args.id_col).y
        est = EstimandSpec.parse(est_name, h)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    if est.kind is EstimandKind.TRANSPORT and data.r is None:
        raise InputError("transport needs --population")
    return data, d, est


def _g_indices(data: Dataset, names: Optional[str]) -> Optional[List[int]]:
    if names is None:
        return None
    try:
        return [data.column_index(nm) for nm in _split_names(names)]
    except KeyError as exc:
        raise InputError(str(exc)) from exc


def _diagnose(data: Dataset, part: BalancePartition, est: EstimandSpec, d: Dispersion) -> dict:
    sys_ = build_system(data, part, est)
    feas = check_feasibility(sys_, nonneg=d.nonnegative_weights)
    return {
        "lp_verdict": feas.verdict.value,
        "violated_row": feas.violated_row,
        "violated_constraint": feas.violated_label,
        "phase1_objective": feas.phase1_objective,
        "g": [data.columns[j] for j in part.g_idx],
    }


def _weights_rows(data: Dataset, w: np.ndarray):
    return [(uid, float(wi)) for uid, wi in zip(data.unit_ids, w)]


def _balance_outputs(out: str, data: Dataset, w: np.ndarray, part: BalancePartition, est: EstimandSpec) -> dict:
    table = diagnostics.smd_table(data, w, est)
    _frame_csv(os.path.join(out, "balance.csv"), table[["covariate", "smd_tc", "smd_t_target", "smd_c_target"]])
    res = diagnostics.balance_residuals(data, w, part, est)
    labels = build_system(data, part, est).row_labels
    return {
        "residuals": {lab: float(v) for lab, v in zip(labels, res)},
        "max_abs_residual": float(np.max(np.abs(res))) if res.size else 0.0,
        "average_abs_smd": diagnostics.average_abs_smd(table),
        "weights": diagnostics.weight_summary(w, data.z, data.analysis_mask),
    }


def _text_report(title: str, fields: dict) -> str:
    lines = [title, "=" * len(title)]
    for k, v in fields.items():
        if isinstance(v, (dict, list, tuple)):
            continue
        lines.append(f"{k}: {fmt(v) if isinstance(v, float) else v}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# commands


def cmd_weights(args) -> int:
    data, d, est = _load(args)
    g = _g_indices(data, args.g) or []
    part = BalancePartition.from_g(data.p, g)
    ws = fit_weights(data, part, est, d)
    if not ws.feasible:
        raise Infeasible("no weights satisfy the balance constraints", _diagnose(data, part, est, d))
    _write_csv(os.path.join(args.out, "weights.csv"), ["unit_id", "weight"], _weights_rows(data, ws.w))
    report = {
        "command": "weights",
        "estimand": est.kind.value,
        "dispersion": d.label,
        "g": [data.columns[j] for j in g],
        "feasible": True,
        "iterations": ws.dual.iterations if ws.dual else 0,
        "target_profile_g": {data.columns[j]: float(v) for j, v in zip(g, ws.target_profile_g)},
        "ess_treated": ws.ess_treated,
        "ess_control": ws.ess_control,
    }
    report.update(_balance_outputs(args.out, data, ws.w, part, est))
    _write(os.path.join(args.out, "report.json"), dumps(report))
    _write(os.path.join(args.out, "report.txt"), _text_report("weights", report))
    return EXIT_OK


def cmd_select(args) -> int:
    data, d, est = _load(args)
    g0 = _g_indices(data, args.g) or []
    if args.seed_rare is not None:
        g0 = g0 + [j for j in rare_binary_seed(data, args.seed_rare) if j not in g0]
    if args.metric == MODEL and data.y is None:
        raise InputError("the model metric needs --outcome")
    try:
        if args.static:
            sel = select_g_static(data, g0=g0, est=est, d=d, metric=args.metric, seed=args.seed)
        else:
            sel = select_g_adaptive(data, g0, est, d, args.metric, seed=args.seed)
    except RelaxedPositivityError as exc:
        part = BalancePartition.from_g(data.p, range(data.p))
        raise Infeasible(str(exc), _diagnose(data, part, est, d)) from exc
    trace_rows = []
    for step in sel.metric_trace:
        for j, v in sorted(step["scores"].items()):
            trace_rows.append((step["step"], data.columns[j], float(v), int(j == step["chosen"])))
    _write_csv(os.path.join(args.out, "trace.csv"), ["step", "covariate", "metric", "chosen"], trace_rows)
    _write_csv(os.path.join(args.out, "weights.csv"), ["unit_id", "weight"], _weights_rows(data, sel.final_weights.w))
    report = {
        "command": "select",
        "metric": args.metric,
        "static": bool(args.static),
        "g": [data.columns[j] for j in sel.g_idx],
        "initial_g": [data.columns[j] for j in g0],
        "steps": sel.steps,
    }
    _write(os.path.join(args.out, "selection.json"), dumps(report))
    _write(os.path.join(args.out, "report.txt"), _text_report("select", report))
    return EXIT_OK


def _pipeline(args, data, d, est):
    g = _g_indices(data, args.g)
    metric = None if args.select == "none" else args.select
    if g is None and metric is None:
        g = []
    if g is None and args.freeze_g:
        full = prtbw_pipeline(est, d, None, metric, args.static, seed=args.seed)
        _, g = full(data)
    return prtbw_pipeline(est, d, g, metric, args.static, seed=args.seed)


def _report_dict(rep: EstimateReport, data: Dataset) -> dict:
    return {
        "tau_hat": rep.tau_hat,
        "se_boot": rep.se_boot,
        "ci_low": rep.ci_low,
        "ci_high": rep.ci_high,
        "boot_total": rep.boot_total,
        "boot_failed": rep.boot_failed,
        "estimand": rep.estimand.kind.value,
        "g_used": [data.columns[j] for j in rep.g_used],
        "seed": rep.seed,
        "verdict": rep.verdict,
        "ci_kind": rep.ci_kind,
    }


def _estimate_core(args, data, d, est) -> dict:
    if data.y is None:
        raise InputError("estimation needs --outcome")
    pipe = _pipeline(args, data, d, est)
    try:
        if args.B == 0:
            tau, g_used = pipe(data)
            rep = EstimateReport(tau, float("nan"), float("nan"), float("nan"), 0, 0, est, g_used, args.seed,
                                 "no interval")
        else:
            rep = bootstrap_ci(data, pipe, args.B, args.seed, args.threads, args.ci, est)
    except InfeasibleError as exc:
        g = _g_indices(data, args.g)
        part = BalancePartition.from_g(data.p, g if g is not None else range(data.p))
        raise Infeasible(str(exc), _diagnose(data, part, est, d)) from exc
    out = _report_dict(rep, data)
    out["dispersion"] = d.label
    out["selection"] = "fixed" if args.g is not None else args.select
    out["freeze_g"] = bool(args.freeze_g)
    return out


def cmd_estimate(args) -> int:
    data, d, est = _load(args)
    report = _estimate_core(args, data, d, est)
    comps = {}
    for name in _split_names(args.compare):
        if name in ("ipw", "ato"):
            ps = comparators.fit_logistic_ps(data)
            val = comparators.ipw_ate(data, ps.e_hat) if name == "ipw" else comparators.ipw_ato(data, ps.e_raw)
            comps[name] = {"estimate": val, "flags": list(ps.flags)}
        elif name == "minimal":
            ws = comparators.minimal_weights_grid(data, est, d)
            comps[name] = {"estimate": comparators.minimal_effect(data, ws) if ws.feasible else float("nan"),
                           "delta": ws.extra["delta"], "feasible": ws.feasible}
        else:
            raise InputError(f"unknown comparator {name!r}")
    report["comparators"] = comps
    _write(os.path.join(args.out, "estimate.json"), dumps(report))
    _write(os.path.join(args.out, "report.txt"), _text_report("estimate", report))
    return EXIT_OK


def trimmed_iow(data: Dataset, bounds=TRIM) -> dict:
    """Inverse-odds estimate after dropping units whose fitted trial
    probability falls outside ``bounds``."""
    _, p = comparators.iow_transport(data)
    keep = (p >= bounds[0]) & (p <= bounds[1])
    dropped = int(np.sum(~keep))
    est, _ = comparators.iow_transport(data, keep)
    return {"estimate": est, "dropped": dropped, "bounds": list(bounds)}


def cmd_transport(args) -> int:
    data, d, est = _load(args)
    report = _estimate_core(args, data, d, est)
    comps = {}
    names = _split_names(args.compare) or ["iow", "trimmed"]
    for name in names:
        try:
            if name == "iow":
                comps[name] = {"estimate": comparators.iow_transport(data)[0]}
            elif name == "trimmed":
                comps[name] = trimmed_iow(data)
            else:
                raise InputError(f"unknown transport comparator {name!r}")
        except ValueError as exc:
            comps[name] = {"estimate": float("nan"), "error": str(exc)}
    report["comparators"] = comps
    _write(os.path.join(args.out, "transport.json"), dumps(report))
    _write(os.path.join(args.out, "report.txt"), _text_report("transport", report))
    return EXIT_OK


def cmd_simulate(args) -> int:
    path = args.grid or args.config
    settings = read_config(path) if path else {}
    for kv in args.set:
        if "=" not in kv:
            raise InputError(f"--set expects key=value, got {kv!r}")
        k, v = kv.split("=", 1)
        settings[k.strip()] = v.strip()
    names = _split_names(args.estimators or settings.get("estimators") or ",".join(simlab.PANEL))
    try:
        grid = simlab.parse_grid(settings)
        panel = simlab.resolve_panel(names)
    except (ValueError, KeyError) as exc:
        raise InputError(str(exc)) from exc
    threads = int(settings.get("threads", args.threads))
    reps, metrics = simlab.run_study(grid, panel, threads)
    _frame_csv(os.path.join(args.out, "replicates.csv"), reps)
    _frame_csv(os.path.join(args.out, "metrics.csv"), metrics)
    return EXIT_OK


def read_weights(path: str, data: Dataset) -> np.ndarray:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if not rows or [h.strip() for h in rows[0]] != ["unit_id", "weight"]:
        raise InputError(f"{path} must have header unit_id,weight")
    pos = {str(uid): i for i, uid in enumerate(data.unit_ids)}
    w = np.full(data.n, np.nan)
    for i, row in enumerate(rows[1:], 1):
        if len(row) != 2:
            raise InputError(f"{path}: row {i} must have two fields")
        if row[0] not in pos:
            raise InputError(f"{path}: unknown unit_id {row[0]!r} at row {i}")
        w[pos[row[0]]] = _to_float(row[1], i, "weight")
    if np.any(np.isnan(w)):
        raise InputError(f"{path} does not cover every unit")
    return w


def cmd_balance(args) -> int:
    data, d, est = _load(args)
    g = _g_indices(data, args.g) or []
    part = BalancePartition.from_g(data.p, g)
    w = read_weights(args.weights, data)
    report = {"command": "balance", "estimand": est.kind.value, "g": [data.columns[j] for j in g]}
    report.update(_balance_outputs(args.out, data, w, part, est))
    _write(os.path.join(args.out, "balance.json"), dumps(report))
    _write(os.path.join(args.out, "report.txt"), _text_report("balance", report))
    return EXIT_OK


COMMANDS = {
    "weights": cmd_weights,
    "select": cmd_select,
    "estimate": cmd_estimate,
    "transport": cmd_transport,
    "simulate": cmd_simulate,
    "balance": cmd_balance,
}


def _reason(out: str, code: int, reason: str, detail: Optional[dict] = None):
    rec = {"exit_code": code, "reason": reason}
    if detail:
        rec["detail"] = detail
    try:
        os.makedirs(out, exist_ok=True)
        _write(os.path.join(out, "reason.json"), dumps(rec))
    except OSError:
        logger.error("could not write reason record to %s", out)


def _out_from_argv(argv: Sequence[str]) -> str:
    # best effort, so reason.json lands in --out even when parsing fails
    for i, tok in enumerate(argv):
        if tok == "--out" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--out="):
            return tok.split("=", 1)[1]
    return "."


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    out = _out_from_argv(argv)
    try:
        try:
            args, _ = _apply_config(ap, argv)
        except SystemExit as exc:
            if exc.code in (0, None):
                return EXIT_OK
            raise InputError("invalid command line") from None
        out = args.out
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        os.makedirs(out, exist_ok=True)
        return COMMANDS[args.command](args)
    except Infeasible as exc:
        logger.error("infeasible: %s", exc)
        report = {"feasible": False, "reason": str(exc)}
        report.update(exc.report)
        _write(os.path.join(out, "report.json"), dumps(report))
        _reason(out, EXIT_INFEASIBLE, str(exc), exc.report)
        return EXIT_INFEASIBLE
    except (InputError, ProblemError, ValueError, KeyError) as exc:
        logger.error("input error: %s", exc)
        _reason(out, EXIT_INPUT, str(exc))
        return EXIT_INPUT


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
