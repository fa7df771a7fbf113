"""Command-line driver: validate, forward, inverse, convergence, stability, manufacture.

Exit codes: 0 success, 2 validation refusal, 3 solver failure.
"""

import argparse
import json
import logging
import multiprocessing
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import norms
from .exceptions import SolverError, ValidationRefused
from .forward import energy_series, solve_nonlinear_forward
from .functionals import psi_matrix
from .inverse import (
    default_tol_compat,
    default_tol_overdet,
    f_l1_distance,
    solve_linear_inverse,
    solve_nonlinear_inverse,
    stability_probe,
)
from .model import (
    as_discrete,
    check_compatibility,
    compute_c0,
    compute_sigma_T0,
    validate_exponents,
    validate_system,
    validate_weight,
)
from .scenario import load_scenario

logger = logging.getLogger("oddinverse")

FMT = "%.12e"
EXIT_OK, EXIT_REFUSED, EXIT_SOLVER = 0, 2, 3


# ---------------------------------------------------------------------------
# output helpers


def write_csv(path, header, columns):
    """Comma-separated table with a header row; deterministic formatting."""
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt=FMT)


def write_json(path, payload):
    Path(path).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _outdir(scenario, out):
    path = Path(out or scenario.output)
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# validate


def run_validate(scenario, stream=sys.stdout):
    """Run every structural check and print a pass/fail table.

    Returns ``(ok, rows)``; the strict exponent test and ``T0`` are advisory.
    """
    spec, grid = scenario.spec, scenario.grid
    d = as_discrete(scenario.data, grid)
    rows = []

    def add(name, ok, detail, required=True):
        rows.append({"check": name, "ok": bool(ok), "detail": detail, "required": required})

    rep = validate_system(spec, grid=grid)
    add("system", rep.ok, "; ".join(rep.violations) or "alpha0 = %.4g" % rep.values.get("alpha0", np.nan))
    nonlinear = not spec.nonlinearity.is_zero
    for mode in ("nonstrict", "strict"):
        rep = validate_exponents(spec, mode)
        add("exponents (%s)" % mode, rep.ok, "; ".join(rep.violations) or "ok", required=nonlinear and mode == "nonstrict")
    for i in d.controlled:
        for k, w in enumerate(d.weights[i]):
            rep = validate_weight(w, spec.l, R=grid.R)
            add("weight omega_%d_%d" % (k + 1, i + 1), rep.ok, "; ".join(rep.violations) or "ok")
    if d.controlled:
        res = check_compatibility(d, grid)
        tol = scenario.run.get("tol_compat")
        for i, r in res.items():
            t = default_tol_compat(d, grid, i) if tol is None else tol
            add("compatibility (component %d)" % (i + 1), np.all(r <= t), "max residual %.3e (tol %.1e)" % (np.max(r), t))
        try:
            pm = psi_matrix(d, grid)
            add("psi nondegenerate", True, "delta_min = %.4g, psi0 = %.4g" % (pm.delta_min, pm.psi0))
        except ValidationRefused as exc:
            add("psi nondegenerate", False, str(exc))
    c0 = compute_c0(d, grid, "inverse" if d.controlled and scenario.run["mode"] != "forward" else "direct")
    add("c0", np.isfinite(c0), "%.6g" % c0, required=False)
    if nonlinear:
        try:
            delta = c0
            sigma, T0 = compute_sigma_T0(spec, delta, dt=grid.dt)
            add("sigma / T0 (strict)", True, "sigma = %.4g, T0 advisory = %.4g" % (sigma, T0), required=False)
        except ValueError as exc:
            add("sigma / T0 (strict)", False, str(exc), required=False)
    ok = all(r["ok"] for r in rows if r["required"])
    width = max(len(r["check"]) for r in rows)
    for r in rows:
        flag = "PASS" if r["ok"] else ("FAIL" if r["required"] else "info")
        print("%-*s  %s  %s" % (width, r["check"], flag, r["detail"]), file=stream)
    print("validation %s" % ("passed" if ok else "REFUSED"), file=stream)
    return ok, rows


def _require_valid(scenario):
    ok, rows = run_validate(scenario, stream=_Null())
    if not ok:
        bad = [r for r in rows if r["required"] and not r["ok"]]
        raise ValidationRefused("; ".join("%s: %s" % (r["check"], r["detail"]) for r in bad))


class _Null:
    def write(self, *_):
        pass

    def flush(self):
        pass


# ---------------------------------------------------------------------------
# forward


def _direct_data(scenario):
    d = as_discrete(scenario.data, scenario.grid)
    if scenario.case is not None and d.known_F is None:
        # manufactured inverse case run forward: plant the true amplitudes
        d.known_F = scenario.case.exact_F(scenario.grid)
    return d


def forward_solution(scenario):
    run = scenario.run
    d = _direct_data(scenario)
    return solve_nonlinear_forward(
        scenario.spec, d, scenario.grid, tol_picard=run["tol_picard"], max_iter=run["max_iter"], mode=run["forward_mode"]
    )


def run_forward(scenario, out=None):
    spec, grid = scenario.spec, scenario.grid
    rep = validate_system(spec, grid=grid)
    rep.extend(validate_exponents(spec, "nonstrict"))
    if not rep.ok:
        raise ValidationRefused("; ".join(rep.violations), rep)
    traj, diag = forward_solution(scenario)
    path = _outdir(scenario, out)
    T, X = np.meshgrid(grid.t, grid.x, indexing="ij")
    cols = [T.ravel(), X.ravel()] + [traj.u[:, i, :].ravel() for i in range(spec.n)]
    write_csv(path / "trajectory.csv", ["t", "x"] + ["u_%d" % (i + 1) for i in range(spec.n)], cols)
    E = energy_series(traj)
    write_csv(path / "energy.csv", ["t"] + ["energy_%d" % (i + 1) for i in range(spec.n)], [grid.t] + list(E.T))
    sweeps = np.arange(1, len(diag.differences) + 1)
    ratios = [np.nan] + list(diag.ratios)
    write_csv(path / "picard.csv", ["sweep", "difference", "ratio"], [sweeps, diag.differences, ratios[: len(sweeps)]])
    xn = traj.x_norm()
    report = {
        "scenario": scenario.name,
        "x_norm": {"sup_l2": xn.sup_l2, "dxl_l2": xn.dxl_l2, "total": xn.total},
        "c0": diag.c0,
        "picard_iterations": diag.iterations,
        "picard_ratios": diag.ratios,
        "mode": diag.mode,
    }
    if scenario.case is not None:
        err = np.abs(traj.u - scenario.case.exact_u(grid))
        report["error_linf"] = float(np.max(err))
    write_json(path / "forward_report.json", report)
    return traj, diag, report


# ---------------------------------------------------------------------------
# inverse


def reconstruct(scenario, method=None):
    run = scenario.run
    spec, grid = scenario.spec, scenario.grid
    method = method or run["method"]
    inner = {"gamma0": run["gamma0"]} if method == "picard" else {}
    if spec.nonlinearity.is_zero:
        return solve_linear_inverse(spec, scenario.data, grid, method=method, tol_compat=run["tol_compat"], **inner)
    return solve_nonlinear_inverse(
        spec,
        scenario.data,
        grid,
        tol_outer=run["tol_outer"],
        max_outer=run["max_outer"],
        method=method,
        tol_compat=run["tol_compat"],
        mode=run["exponent_mode"],
        **inner,
    )


def run_inverse(scenario, out=None, method=None):
    """Reconstruct ``F`` and write ``reconstruction.csv``, ``psi.csv`` and ``diagnostics.json``.

    ``method="both"`` runs march and picard and adds agreement columns.
    """
    spec, grid = scenario.spec, scenario.grid
    _require_valid(scenario)
    d = as_discrete(scenario.data, grid)
    method = method or scenario.run["method"]
    both = method == "both"
    res = reconstruct(scenario, "march" if both else method)
    other = reconstruct(scenario, "picard") if both else None
    path = _outdir(scenario, out)

    header, cols = ["t"], [grid.t]
    from .functionals import q_functional

    for i, k in res.pairs():
        tag = "%d_%d" % (k + 1, i + 1)
        q = q_functional(res.trajectory, i, d.weights[i][k], grid).values
        header += ["F_" + tag, "residual_" + tag]
        cols += [res.F[i][k], q - d.phi[i][k]]
    summary = {}
    if scenario.case is not None:
        exact = scenario.case.exact_F(grid)
        for i, k in res.pairs():
            tag = "%d_%d" % (k + 1, i + 1)
            e = res.F[i][k] - exact[i][k]
            header += ["Fstar_" + tag, "error_" + tag]
            cols += [exact[i][k], e]
            summary[tag] = {
                "l1": norms.l1_norm(e, grid.dt),
                "linf": float(np.max(np.abs(e))),
                "l1_relative": norms.l1_norm(e, grid.dt) / max(norms.l1_norm(exact[i][k], grid.dt), 1e-300),
            }
    if other is not None:
        for i, k in res.pairs():
            header.append("agreement_%d_%d" % (k + 1, i + 1))
            cols.append(np.abs(res.F[i][k] - other.F[i][k]))
    write_csv(path / "reconstruction.csv", header, cols)

    pm = psi_matrix(d, grid, check=False)
    ph, pc = ["t"], [grid.t]
    for i in sorted(pm.psi):
        m = pm.psi[i].shape[1]
        for k in range(m):
            for j in range(m):
                ph.append("psi_%d_%d_%d" % (i + 1, k + 1, j + 1))
                pc.append(pm.psi[i][:, k, j])
        ph.append("delta_%d" % (i + 1))
        pc.append(pm.delta[i])
    write_csv(path / "psi.csv", ph, pc)

    try:
        sigma, T0 = compute_sigma_T0(spec, res.c0, dt=grid.dt)
    except ValueError:
        sigma, T0 = float("nan"), float("nan")
    tol_overdet = scenario.run["tol_overdet"] or default_tol_overdet(d)
    diag = {
        "scenario": scenario.name,
        "method": res.method,
        "delta_min": res.delta_min,
        "gamma_used": res.gamma_used,
        "outer_ratios": res.outer_ratios,
        "inner_iters": res.inner_iters,
        "c0": res.c0,
        "sigma": sigma,
        "T0_advisory": T0,
        "residual_phi": {"%d_%d" % (k + 1, i + 1): v for (k, i), v in res.residual_phi.items()},
        "tol_overdet": tol_overdet,
        "overdet_within_tol": all(v <= tol_overdet for v in res.residual_phi.values()),
    }
    if summary:
        diag["errors"] = summary
        thr = scenario.run.get("error_threshold")
        if thr is not None:
            diag["error_below_threshold"] = all(s["l1_relative"] < thr for s in summary.values())
    if other is not None:
        diag["march_picard_l1"] = f_l1_distance(res.F, other.F, grid.dt)
        diag["picard_gamma_used"] = other.gamma_used
    write_json(path / "diagnostics.json", diag)
    return res, diag


# ---------------------------------------------------------------------------
# convergence


def parse_levels(text):
    levels = []
    for item in text.split(","):
        a, _, b = item.strip().lower().partition("x")
        levels.append((int(a), int(b or a)))
    return levels


def fit_order(h, err):
    """Least-squares slope of ``log err`` against ``log h``."""
    h, err = np.asarray(h, dtype=float), np.asarray(err, dtype=float)
    if len(h) < 3:
        raise ValidationRefused("convergence needs at least 3 levels, got %d" % len(h))
    if np.ptp(np.log(h)) == 0:
        raise ValidationRefused("convergence levels have identical resolution; order fit ill-posed")
    mask = err > 0
    if mask.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(h[mask]), np.log(err[mask]), 1)[0])


_POOL_SCENARIO = None


def _pool_level(level):
    return _level_errors(_POOL_SCENARIO, level)


def _level_errors(scenario, level):
    Nx, Nt = level
    sc = scenario.with_grid(Nx, Nt)
    g = sc.grid
    row = {"Nx": Nx, "Nt": Nt, "dx": g.dx, "dt": g.dt}
    if sc.run["mode"] == "forward" or not sc.case.F:
        traj, _ = forward_solution(sc)
    else:
        res = reconstruct(sc)
        exact = sc.case.exact_F(g)
        row["inverse_error"] = f_l1_distance(res.F, exact, g.dt)
        traj = res.trajectory
    row["forward_error"] = float(np.max(np.abs(traj.u - sc.case.exact_u(g))))
    return row


def run_convergence(scenario, levels=None, out=None, jobs=1):
    """Per-level errors and fitted orders; writes ``convergence.csv`` and a gnuplot ``.dat``."""
    if scenario.case is None:
        raise ValidationRefused("convergence study needs a manufactured scenario")
    levels = levels or scenario.run.get("levels")
    if not levels:
        raise ValidationRefused("no refinement levels given")
    levels = [tuple(int(v) for v in lv) for lv in levels]
    if len(levels) < 3:
        raise ValidationRefused("convergence needs at least 3 levels, got %d" % len(levels))
    if len(set(levels)) < len(levels):
        raise ValidationRefused("repeated refinement levels; order fit ill-posed")
    if jobs > 1:
        # scenario data hold closures, so workers inherit it by fork instead of pickling
        global _POOL_SCENARIO
        _POOL_SCENARIO = scenario
        with ProcessPoolExecutor(max_workers=jobs, mp_context=multiprocessing.get_context("fork")) as pool:
            rows = list(pool.map(_pool_level, levels))
    else:
        rows = [_level_errors(scenario, lv) for lv in levels]
    h = [r["dx"] for r in rows]
    table = {"levels": rows, "forward_order": fit_order(h, [r["forward_error"] for r in rows])}
    if all("inverse_error" in r for r in rows):
        errs = [r["inverse_error"] for r in rows]
        table["inverse_order"] = fit_order(h, errs)
        table["inverse_monotone"] = bool(all(b < a for a, b in zip(errs[:-1], errs[1:])))
    path = _outdir(scenario, out)
    keys = ["Nx", "Nt", "dx", "dt", "forward_error"] + (["inverse_error"] if "inverse_order" in table else [])
    write_csv(path / "convergence.csv", keys, [[r[k] for r in rows] for k in keys])
    with open(path / "convergence.dat", "w") as fh:
        fh.write("# " + " ".join(keys) + "\n")
        for r in rows:
            fh.write(" ".join(FMT % r[k] for k in keys) + "\n")
    write_json(path / "convergence.json", table)
    return table


# ---------------------------------------------------------------------------
# stability and manufacture


def run_stability(scenario, amplitudes=(1e-3, 1e-6), out=None, seed=0):
    """Lipschitz ratios for smooth random perturbations of ``phi'``."""
    _require_valid(scenario)
    d = as_discrete(scenario.data, scenario.grid)
    rng = np.random.default_rng(seed)
    t = scenario.grid.t / scenario.grid.T
    shapes = {i: np.stack([np.sin((rng.integers(1, 4)) * np.pi * t + rng.uniform(0, np.pi)) for _ in range(d.m(i))]) for i in d.controlled}
    base = reconstruct(scenario)
    rows = []
    for a in amplitudes:
        ratio = stability_probe(scenario.spec, d, scenario.grid, {i: a * s for i, s in shapes.items()}, baseline=base)
        rows.append({"amplitude": a, "ratio": ratio})
    path = _outdir(scenario, out)
    write_csv(path / "stability.csv", ["amplitude", "ratio"], [[r["amplitude"] for r in rows], [r["ratio"] for r in rows]])
    return rows


def run_manufacture(scenario, out=None):
    case = scenario.case
    if case is None:
        raise ValidationRefused("scenario has no 'manufactured' section")
    payload = {
        "u": [str(u) for u in case.u],
        "h0": [str(h) for h in case.h0],
        "mu": [[str(e) for e in row] for row in case.mu],
        "nu": [[str(e) for e in row] for row in case.nu],
        "F": {str(i + 1): [str(f) for f in fs] for i, fs in case.F.items()},
        "substitution_residual": case.residual,
    }
    write_json(_outdir(scenario, out) / "manufactured.json", payload)
    return payload


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    p = argparse.ArgumentParser(prog="oddinverse", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("scenario")
        sp.add_argument("--out", default=None, help="output directory (default: scenario 'output')")
        sp.add_argument("--tol-picard", type=float, default=None)
        sp.add_argument("--tol-outer", type=float, default=None)
        sp.add_argument("--gamma0", type=float, default=None)
        sp.add_argument("--seed", type=int, default=None)
        return sp

    common(sub.add_parser("validate", help="structural checks"))
    common(sub.add_parser("forward", help="solve the direct problem"))
    sp = common(sub.add_parser("inverse", help="recover source amplitudes"))
    sp.add_argument("--method", choices=["march", "picard", "both"], default=None)
    sp = common(sub.add_parser("convergence", help="refinement study"))
    sp.add_argument("--levels", default=None, help="e.g. 64x64,128x128,256x256")
    sp.add_argument("--jobs", type=int, default=1)
    sp = common(sub.add_parser("stability", help="empirical Lipschitz ratio"))
    sp.add_argument("--amplitudes", default="1e-3,1e-6")
    common(sub.add_parser("manufacture", help="write derived manufactured data"))
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        scenario = load_scenario(args.scenario)
        for key, attr in (("tol_picard", "tol_picard"), ("tol_outer", "tol_outer"), ("gamma0", "gamma0"), ("seed", "seed")):
            val = getattr(args, attr)
            if val is not None:
                scenario.run[key] = val
        if args.command == "validate":
            ok, _ = run_validate(scenario)
            return EXIT_OK if ok else EXIT_REFUSED
        if args.command == "forward":
            _, _, report = run_forward(scenario, args.out)
            print(json.dumps(_jsonable(report), sort_keys=True))
        elif args.command == "inverse":
            _, diag = run_inverse(scenario, args.out, args.method)
            print(json.dumps(_jsonable(diag), sort_keys=True))
        elif args.command == "convergence":
            levels = parse_levels(args.levels) if args.levels else None
            table = run_convergence(scenario, levels, args.out, args.jobs)
            print(json.dumps(_jsonable(table), sort_keys=True))
        elif args.command == "stability":
            rows = run_stability(scenario, [float(a) for a in args.amplitudes.split(",")], args.out, scenario.run["seed"])
            print(json.dumps(_jsonable(rows)))
        elif args.command == "manufacture":
            print(json.dumps(_jsonable(run_manufacture(scenario, args.out)), indent=2))
    except ValidationRefused as exc:
        print("refused (%s): %s" % (getattr(exc, "__class__").__name__, exc), file=sys.stderr)
        return EXIT_REFUSED
    except SolverError as exc:
        print("solver failure in scenario %r: %s" % (args.scenario, exc), file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
