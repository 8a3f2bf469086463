"""File-based command-line pipeline.

Verbs: fit, generate, validate, solve, evaluate, make-instance, sweep.
Structured artifacts are JSON (model, plan, report, validation) and
scenario matrices are CSV. Every artifact embeds the deterministic part
of its run manifest (command, inputs with content hashes, seed, tool
version, tolerances); the wall-clock timestamp lives in a sidecar
`<out>.manifest.json` so that re-running a command with identical
inputs and seeds reproduces the artifact itself byte for byte.

Exit codes: 0 success, 2 input validation, 3 numerical failure,
4 resource limit.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime
import hashlib
import json
import sys

import numpy as np

from . import __version__, norta
from .errors import NumericalError, ResourceLimitError, ValidationError
from .grid import (GridInstance, HardeningPlan, InstanceSpec, generate_instance,
                   load_grid, load_scenarios, save_grid, save_scenarios)
from .norta import FitReport, NortaModel, PairMatch, ScenarioSet, estimate_inputs
from .stats import EmpiricalMarginal, emd
from .twostage import (STAT_ROWS, RecourseSolver, TwoStageProblem, budget_sweep,
                       evaluate_oos, greedy_first_stage, solve_first_stage)

__all__ = ["build_parser", "load_model", "load_plans", "main"]


# ----------------------------------------------------------------------
# Manifest and artifact plumbing


def _sha256(path):
    h = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 16), b""):
                h.update(chunk)
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    return h.hexdigest()


def _manifest(args, command, inputs, tolerances=None):
    return {
        "command": command,
        "inputs": [{"path": str(p), "sha256": _sha256(p)} for p in inputs],
        "seed": args.seed,
        "version": __version__,
        "tolerances": tolerances or {},
    }


def _write_sidecar(path, manifest):
    side = dict(manifest)
    side["artifact"] = str(path)
    side["created_utc"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    with open(f"{path}.manifest.json", "w", encoding="utf-8") as fh:
        json.dump(side, fh, indent=2)
        fh.write("\n")


def _write_json(path, payload, manifest):
    payload = dict(payload)
    payload["manifest"] = manifest
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    _write_sidecar(path, manifest)


def _read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: expected a JSON object")
    return data


def _say(args, msg):
    if not args.quiet:
        print(msg)


def _mat(a):
    return [[float(v) for v in row] for row in np.asarray(a)]


def _seven_stats(values):
    """Table-style summary: mean/std/min/25%/50%/75%/max."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return None
    q25, q50, q75 = (float(v) for v in np.percentile(arr, [25.0, 50.0, 75.0]))
    return {
        "mean": float(arr.mean()),
        "std": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
        "min": float(arr.min()),
        "25%": q25,
        "50%": q50,
        "75%": q75,
        "max": float(arr.max()),
    }


# ----------------------------------------------------------------------
# Model and plan serialization


def load_model(path) -> NortaModel:
    data = _read_json(path)
    try:
        marginals = [EmpiricalMarginal(vals) for vals in data["marginals"]]
        sigma_x = np.asarray(data["sigma_x"], dtype=float)
        sigma_z = np.asarray(data["sigma_z"], dtype=float)
        y = np.asarray(data["y"], dtype=float)
        chol = np.asarray(data["chol"], dtype=float)
        raw_cols = data.get("columns")
        columns = tuple(int(c) for c in raw_cols) if raw_cols is not None else None
        rep = data.get("fit_report", {})
        pairs = [PairMatch(int(p["i"]), int(p["j"]), float(p["target"]),
                           float(p["rho_z"]), float(p["residual"]), bool(p["clamped"]))
                 for p in rep.get("pairs", [])]
        report = FitReport(pairs, float(rep.get("repair_distance", 0.0)),
                           float(rep.get("chol_jitter", 0.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed model file {path}: {exc}") from exc
    n = len(marginals)
    for name, m in (("sigma_x", sigma_x), ("sigma_z", sigma_z), ("y", y), ("chol", chol)):
        if m.shape != (n, n):
            raise ValidationError(
                f"{path}: {name} has shape {m.shape}, expected ({n}, {n})")
    if columns is not None and len(columns) != n:
        raise ValidationError(f"{path}: columns do not match marginal count")
    return NortaModel(marginals=marginals, sigma_x=sigma_x, sigma_z=sigma_z,
                      y=y, chol=chol, report=report, columns=columns)


def load_plans(path, grid: GridInstance):
    """Plan-file entries as (budget, plan, so_estimate) tuples."""
    data = _read_json(path)
    entries = data.get("plans")
    if not isinstance(entries, list) or not entries:
        raise ValidationError(f"{path}: expected a non-empty 'plans' list")
    out = []
    for k, entry in enumerate(entries):
        try:
            hmap = entry["heights"]
            heights = []
            for sid in grid.flooded_ids:
                key = str(sid)
                if key not in hmap:
                    raise ValidationError(
                        f"{path}: plan {k + 1} is missing a height for substation {sid}")
                heights.append(int(hmap[key]))
            budget = float(entry["budget"]) if entry.get("budget") is not None else None
            so = float(entry["so_estimate"]) if entry.get("so_estimate") is not None else None
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}: malformed plan {k + 1}: {exc}") from exc
        out.append((budget, HardeningPlan(np.array(heights, dtype=int)), so))
    return out


# ----------------------------------------------------------------------
# Report emission


def _budget_labels(reports):
    labels = []
    for k, rep in enumerate(reports):
        labels.append(repr(float(rep.budget)) if rep.budget is not None else f"plan{k + 1}")
    return labels


def _report_payload(reports):
    table = {}
    for row_i, name in enumerate(STAT_ROWS):
        vals = []
        for rep in reports:
            v = rep.stat_values()[row_i]
            vals.append(float(v) if v is not None else None)
        table[name] = vals
    return {
        "format": "nortagrid-report",
        "m": int(reports[0].m),
        "statistics": list(STAT_ROWS),
        "budgets": [rep.budget for rep in reports],
        "quantile_method": "linear",
        "std_denominator": "M-1",
        "table": table,
        "columns": [rep.to_dict() for rep in reports],
    }


def _write_report_csv(path, reports, manifest):
    labels = _budget_labels(reports)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["statistic"] + labels)
        for row_i, name in enumerate(STAT_ROWS):
            cells = [name]
            for rep in reports:
                v = rep.stat_values()[row_i]
                cells.append("" if v is None else repr(float(v)))
            writer.writerow(cells)
    _write_sidecar(path, manifest)


def _emit_reports(args, reports, manifest):
    for out in args.out:
        if out.endswith(".json"):
            _write_json(out, _report_payload(reports), manifest)
        elif out.endswith(".csv"):
            _write_report_csv(out, reports, manifest)
        else:
            raise ValidationError(f"report path {out} must end in .json or .csv")
        _say(args, f"wrote {out}")


# ----------------------------------------------------------------------
# Commands


def cmd_fit(args):
    s = load_scenarios(args.scenarios)
    model = norta.fit(s, degree=args.degree, match_tol=args.match_tol,
                      bisect_max_iter=args.bisect_max_iter, threads=args.threads)
    manifest = _manifest(args, "fit", [args.scenarios], tolerances={
        "match_tol": args.match_tol,
        "bisect_max_iter": args.bisect_max_iter,
        "gh_degree": args.degree,
        "psd_tol": 1e-9,
    })
    payload = {
        "format": "nortagrid-model",
        "columns": [int(c) for c in model.columns] if model.columns is not None else None,
        "marginals": [[float(v) for v in m.sorted_values] for m in model.marginals],
        "sigma_x": _mat(model.sigma_x),
        "sigma_z": _mat(model.sigma_z),
        "y": _mat(model.y),
        "chol": _mat(model.chol),
        "fit_report": model.report.to_dict(),
    }
    _write_json(args.out, payload, manifest)
    _say(args, f"fit: {model.dim} marginals from {s.n_scenarios} scenarios "
               f"({model.report.clamp_count} clamped pairs, "
               f"repair distance {model.report.repair_distance:.3g}) -> {args.out}")


def cmd_generate(args):
    if args.count < 1:
        raise ValidationError("--count must be at least 1")
    model = load_model(args.model)
    seed = args.seed if args.seed is not None else 0
    s = norta.sample(model, args.count, seed)
    if s.columns is None:
        s = ScenarioSet(s.scenarios, s.probs, columns=tuple(range(s.dim)))
    manifest = _manifest(args, "generate", [args.model])
    manifest["seed"] = seed
    save_scenarios(s, args.out)
    _write_sidecar(args.out, manifest)
    _say(args, f"generate: {s.n_scenarios} x {s.dim} synthetic scenarios -> {args.out}")


def cmd_validate(args):
    orig = load_scenarios(args.scenarios)
    synth = load_scenarios(args.synthetic)
    if orig.dim != synth.dim:
        raise ValidationError(
            f"dimension mismatch: {args.scenarios} has {orig.dim} columns, "
            f"{args.synthetic} has {synth.dim}")
    if (orig.columns is not None and synth.columns is not None
            and orig.columns != synth.columns):
        raise ValidationError("scenario files carry different substation ids")
    marg_o, sig_o = estimate_inputs(orig)
    marg_s, sig_s = estimate_inputs(synth)
    n = orig.dim
    ids = orig.columns if orig.columns is not None else tuple(range(n))
    emds = [emd(marg_o[j], marg_s[j]) for j in range(n)]
    pairs = []
    errs = []
    for i in range(n):
        for j in range(i + 1, n):
            v = abs(float(sig_o[i, j]) - float(sig_s[i, j]))
            pairs.append({"i": int(ids[i]), "j": int(ids[j]), "value": v})
            errs.append(v)
    manifest = _manifest(args, "validate", [args.scenarios, args.synthetic])
    payload = {
        "format": "nortagrid-validation",
        "n_scenarios": orig.n_scenarios,
        "n_synthetic": synth.n_scenarios,
        "emd": {
            "per_dimension": [{"column": int(ids[j]), "value": float(emds[j])}
                              for j in range(n)],
            "summary": _seven_stats(emds),
        },
        "correlation_error": {"pairs": pairs, "summary": _seven_stats(errs)},
    }
    _write_json(args.out, payload, manifest)
    msg = f"validate: mean EMD {payload['emd']['summary']['mean']:.4g}"
    corr_summary = payload["correlation_error"]["summary"]
    if corr_summary:
        msg += f", mean |corr error| {corr_summary['mean']:.4g}"
    _say(args, f"{msg} -> {args.out}")


def _parse_budgets(args, grid):
    if getattr(args, "budgets", None):
        try:
            budgets = [float(tok) for tok in args.budgets.split(",") if tok.strip()]
        except ValueError as exc:
            raise ValidationError(f"bad --budgets list: {exc}") from exc
        if not budgets:
            raise ValidationError("--budgets must name at least one budget")
    elif getattr(args, "budget", None) is not None:
        budgets = [float(args.budget)]
    else:
        budgets = [grid.budget]
    if any(b < 0 for b in budgets):
        raise ValidationError("budgets must be non-negative")
    return budgets


def cmd_solve(args):
    grid = load_grid(args.grid)
    scen = load_scenarios(args.scenarios)
    problem = TwoStageProblem(grid, scen)
    budgets = sorted(_parse_budgets(args, grid))
    solver = RecourseSolver(grid)
    entries = []
    for b in budgets:
        if args.method == "greedy":
            plan, so = greedy_first_stage(problem, b, solver=solver)
        else:
            plan, so = solve_first_stage(problem, b, node_budget=args.node_budget,
                                         solver=solver)
        entries.append({
            "budget": float(b),
            "heights": {str(sid): int(h)
                        for sid, h in zip(grid.flooded_ids, plan.heights)},
            "cost": float(plan.cost(grid)),
            "so_estimate": float(so),
        })
        _say(args, f"solve: budget {b:g} -> SO estimate {so:.6g}, "
                   f"plan cost {entries[-1]['cost']:g}")
    manifest = _manifest(args, "solve", [args.grid, args.scenarios], tolerances={
        "lp_feas_tol": 1e-9, "lp_opt_tol": 1e-9, "budget_slack": 1e-9,
    })
    payload = {
        "format": "nortagrid-plan",
        "method": args.method,
        "flooded_ids": [int(s) for s in grid.flooded_ids],
        "plans": entries,
    }
    _write_json(args.out, payload, manifest)
    _say(args, f"wrote {args.out}")


def cmd_evaluate(args):
    grid = load_grid(args.grid)
    synth = load_scenarios(args.synthetic)
    problem = TwoStageProblem(grid, synth)
    solver = RecourseSolver(grid)
    reports = []
    for budget, plan, so in load_plans(args.plan, grid):
        plan.check_feasible(grid, budget=float("inf"))
        rep = evaluate_oos(problem, plan, synth, solver=solver)
        rep.budget = budget
        rep.so_estimate = so
        reports.append(rep)
    manifest = _manifest(args, "evaluate", [args.grid, args.plan, args.synthetic],
                         tolerances={"lp_feas_tol": 1e-9, "lp_opt_tol": 1e-9})
    _emit_reports(args, reports, manifest)


def cmd_sweep(args):
    grid = load_grid(args.grid)
    scen = load_scenarios(args.scenarios)
    synth = load_scenarios(args.synthetic)
    problem = TwoStageProblem(grid, scen)
    budgets = _parse_budgets(args, grid)
    reports = budget_sweep(problem, budgets, synth, node_budget=args.node_budget)
    for rep in reports:
        _say(args, f"sweep: budget {rep.budget:g} -> SO {rep.so_estimate:.6g}, "
                   f"OOS mean {rep.mean:.6g}")
    manifest = _manifest(args, "sweep",
                         [args.grid, args.scenarios, args.synthetic],
                         tolerances={"lp_feas_tol": 1e-9, "lp_opt_tol": 1e-9,
                                     "budget_slack": 1e-9})
    _emit_reports(args, reports, manifest)


def cmd_make_instance(args):
    spec = InstanceSpec.from_dict(_read_json(args.spec))
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    grid, scen = generate_instance(spec)
    grid_path, scen_path = args.out
    manifest = _manifest(args, "make-instance", [args.spec])
    manifest["seed"] = spec.seed
    save_grid(grid, grid_path, extra={"manifest": manifest})
    _write_sidecar(grid_path, manifest)
    save_scenarios(scen, scen_path)
    _write_sidecar(scen_path, manifest)
    _say(args, f"make-instance: {len(grid.substations)} substations "
               f"({len(grid.flooded_ids)} flooded), {scen.n_scenarios} scenarios "
               f"-> {grid_path}, {scen_path}")


# ----------------------------------------------------------------------
# Parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="seed for any randomized step (default: command-specific)")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads for independent sub-tasks")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    p = argparse.ArgumentParser(
        prog="nortagrid",
        description="Correlated flood-scenario generation and two-stage "
                    "grid-hardening optimization.")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", parents=[common],
                       help="fit a scenario-generation model to a scenario CSV")
    f.add_argument("scenarios", help="training scenario CSV")
    f.add_argument("--out", required=True, help="output model JSON")
    f.add_argument("--degree", type=int, default=64,
                   help="Gauss-Hermite degree per axis (default 64)")
    f.add_argument("--match-tol", type=float, default=1e-4,
                   help="correlation-matching tolerance (default 1e-4)")
    f.add_argument("--bisect-max-iter", type=int, default=200)
    f.set_defaults(func=cmd_fit)

    g = sub.add_parser("generate", parents=[common],
                       help="sample synthetic scenarios from a fitted model")
    g.add_argument("model", help="model JSON from `fit`")
    g.add_argument("--count", type=int, default=800,
                   help="number of synthetic scenarios (default 800)")
    g.add_argument("--out", required=True, help="output scenario CSV")
    g.set_defaults(func=cmd_generate)

    v = sub.add_parser("validate", parents=[common],
                       help="compare synthetic scenarios against the originals")
    v.add_argument("scenarios", help="original scenario CSV")
    v.add_argument("synthetic", help="synthetic scenario CSV")
    v.add_argument("--out", required=True, help="output validation JSON")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("solve", parents=[common],
                       help="optimize hardening heights under a budget")
    s.add_argument("grid", help="grid JSON")
    s.add_argument("scenarios", help="training scenario CSV")
    group = s.add_mutually_exclusive_group()
    group.add_argument("--budget", type=float, default=None,
                       help="single budget (default: the grid's budget)")
    group.add_argument("--budgets", default=None,
                       help="comma-separated budget list")
    s.add_argument("--method", choices=("exact", "greedy"), default="exact")
    s.add_argument("--node-budget", type=int, default=10 ** 6)
    s.add_argument("--out", required=True, help="output plan JSON")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("evaluate", parents=[common],
                       help="evaluate saved plans on out-of-sample scenarios")
    e.add_argument("grid", help="grid JSON")
    e.add_argument("plan", help="plan JSON from `solve`")
    e.add_argument("synthetic", help="out-of-sample scenario CSV")
    e.add_argument("--out", required=True, nargs="+",
                   help="report path(s); .json and/or .csv")
    e.set_defaults(func=cmd_evaluate)

    w = sub.add_parser("sweep", parents=[common],
                       help="solve and evaluate across a list of budgets")
    w.add_argument("grid", help="grid JSON")
    w.add_argument("scenarios", help="training scenario CSV")
    w.add_argument("synthetic", help="out-of-sample scenario CSV")
    w.add_argument("--budgets", required=True, help="comma-separated budget list")
    w.add_argument("--node-budget", type=int, default=10 ** 6)
    w.add_argument("--out", required=True, nargs="+",
                   help="report path(s); .json and/or .csv")
    w.set_defaults(func=cmd_sweep)

    m = sub.add_parser("make-instance", parents=[common],
                       help="generate a synthetic grid and flood scenarios")
    m.add_argument("--spec", required=True, help="instance-spec JSON")
    m.add_argument("--out", required=True, nargs=2,
                   metavar=("GRID", "SCENARIOS"),
                   help="output grid JSON and scenario CSV")
    m.set_defaults(func=cmd_make_instance)

    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ResourceLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
