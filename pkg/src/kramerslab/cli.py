"""Command-line front end.

Subcommands: check, rate, simulate, sweep, rayleigh.  Exit codes: 0 pass,
1 a criterion failed, 2 usage or configuration error, 3 numerical failure.
Files are written only below ``--out``.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .asymptotics import kramers_rate, lemma_L0_report
from .config import RunConfig, load_config, parse_eps_list
from .errors import AssumptionError, ConfigurationError, DomainError, FitError, NumericalError, PositivityError
from .experiments import MINIMALITY_TOL, _clean, build_context, prepare, rayleigh_table, sweep
from .fokker_planck import evolve
from .limit_flow import limit_solution
from .measure import asymptotic_partition, log_tau
from .potential import check_assumptions, get_potential

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _write_xy(path: Path, x, y) -> None:
    with path.open("w") as fh:
        for a, b in zip(x, y):
            fh.write(f"{float(a)!r} {float(b)!r}\n")


def _table(header: list[str], rows) -> str:
    cells = [header] + [[f"{v:.6g}" if isinstance(v, (float, np.floating)) else str(v) for v in r] for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(header))]
    return "\n".join("  ".join(c[i].rjust(widths[i]) for i in range(len(header))) for c in cells)


def _config(args, sweep_range: bool) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    over = {}
    if args.potential is not None:
        over["potential"] = args.potential
    if args.eps is not None:
        over["epsilons"] = parse_eps_list(args.eps)
    for name in ("alpha", "u0", "T", "seed"):
        val = getattr(args, name, None)
        if val is not None:
            over[name] = val
    if args.out is not None:
        over["out"] = args.out
    cfg = replace(cfg, **over)
    return cfg.validate(sweep_range=sweep_range)


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps(_clean(payload), sort_keys=True, indent=2))
    else:
        print(text)


# ---------------------------------------------------------------- commands

def cmd_check(args) -> int:
    cfg = _config(args, sweep_range=False)
    p = get_potential(cfg.potential, **cfg.potential_params)
    report = check_assumptions(p)
    contexts = [build_context(cfg, e) for e in cfg.epsilons] if report.core_passed else []
    lines = [f"assumption audit: {p.name}",
             _table(["check", "passed", "worst", "advisory"],
                    [[c.name, c.passed, c.worst, c.advisory] for c in report.checks])]
    l0_rows = []
    for ctx in contexts:
        for r in lemma_L0_report(ctx):
            l0_rows.append([ctx.epsilon, r.name, r.value, r.target, r.deviation])
    if l0_rows:
        lines += ["", "measure asymptotics", _table(["eps", "quantity", "value", "target", "deviation"], l0_rows)]
    if not report.core_passed:
        lines.append("failing assumptions: " + ", ".join(report.failures))
    payload = {"potential": p.name, "core_passed": report.core_passed, "failures": report.failures,
               "advisories": report.advisories, "checks": report.rows(),
               "lemma_L0": [dict(zip(["eps", "quantity", "value", "target", "deviation"], r)) for r in l0_rows]}
    _emit(args, payload, "\n".join(lines))
    if args.out is not None:
        out = _outdir(cfg)
        _write_csv(out / "assumptions.csv", ["check", "passed", "worst", "advisory"],
                   [[c.name, c.passed, c.worst, c.advisory] for c in report.checks])
        if l0_rows:
            _write_csv(out / "lemma_L0.csv", ["eps", "quantity", "value", "target", "deviation"], l0_rows)
    return EXIT_OK if report.core_passed else EXIT_FAIL


def cmd_rate(args) -> int:
    cfg = _config(args, sweep_range=False)
    p = get_potential(cfg.potential, **cfg.potential_params)
    rc = kramers_rate(p)
    taus = [math.exp(log_tau(e)) for e in cfg.epsilons]
    zs = [asymptotic_partition(p, e) for e in cfg.epsilons]
    single = len(cfg.epsilons) == 1
    payload = {"potential": p.name, "k": rc.k, "curvature_barrier": rc.curvature_barrier,
               "curvature_well": rc.curvature_well,
               "eps": cfg.epsilons[0] if single else list(cfg.epsilons),
               "tau": taus[0] if single else taus, "Z_asym": zs[0] if single else zs}
    text = f"k = {rc.k!r}\n" + _table(["eps", "tau", "Z_asym"], list(zip(cfg.epsilons, taus, zs)))
    _emit(args, payload, text)
    return EXIT_OK


def read_snapshots(path) -> dict[str, np.ndarray]:
    """Load a snapshot CSV written by ``simulate`` back into column arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body]) if body else np.empty((0, len(header)))
    return {h: data[:, i] for i, h in enumerate(header)}


def cmd_simulate(args) -> int:
    cfg = _config(args, sweep_range=True)
    eps = cfg.epsilons[0]
    ctx, grid, op, u_init = prepare(cfg, eps)
    traj = evolve(ctx, grid, u_init, cfg.T, cfg.time_controls(), op)
    out = _outdir(cfg)
    x, lg = grid.cell_centers, op.log_gamma_centers
    with (out / "snapshots.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "u", "rho", "log_gamma"])
        for i in traj.snapshot_index:
            st = traj.field(i)
            for xi, ui, ri, gi in zip(x, st.values, st.rho, lg):
                w.writerow([_fmt(st.time), _fmt(xi), _fmt(ui), _fmt(ri), _fmt(gi)])

    up = dg.u_plus_series(traj)
    energy = dg.energy_series(traj)
    g = dg.metric_series(traj)
    ap = dg.apriori_residuals(traj)
    le = dg.layer_error(traj, ctx)
    j0_cum = np.concatenate([[0.0], np.cumsum(0.5 * (le.sup_J0_sq_series[1:] + le.sup_J0_sq_series[:-1]) * traj.dt)])
    rows = []
    for i in traj.snapshot_index:
        rows.append([traj.times[i], up[i], 2.0 * (traj.states[i] @ op.mass) - up[i],
                     energy[i], g[i - 1] if i > 0 else float("nan"),
                     ap.cumulative1[i - 1] if i > 0 else 0.0, ap.cumulative2[i - 1] if i > 0 else 0.0,
                     le.sup_I_series[i], j0_cum[i]])
    _write_csv(out / "diagnostics.csv", ["t", "u_plus", "u_minus", "E_eps", "g_eps", "apriori1_residual",
                                         "apriori2_residual", "layer_sup_I", "layer_J0"], rows)
    mass = traj.states @ op.mass
    summary = {"epsilon": eps, "alpha": cfg.alpha, "potential": cfg.potential, "u0": cfg.u0, "T": cfg.T,
               "n_cells": grid.size, "dt": traj.dt, "theta": traj.theta, "n_steps": traj.n_steps,
               "apriori1_max_step": ap.max_step1, "apriori2_max_step": ap.max_step2,
               "mass_drift": float(np.max(np.abs(mass - mass[0]))),
               "u_plus_final": float(up[-1]), "initial_info": u_init.info,
               "truncation_mass_bound": ctx.truncation_mass_bound()}
    (out / "summary.json").write_text(json.dumps(_clean(summary), sort_keys=True, indent=2) + "\n")
    _emit(args, summary, _table(["t", "u_plus"], [[traj.times[i], up[i]] for i in traj.snapshot_index[::10]]))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args, sweep_range=True)
    report = sweep(cfg, workers=args.workers)
    out = _outdir(cfg)
    (out / "report.json").write_text(report.to_json())
    rate_rows = [[name, r.get("slope"), r.get("r_squared")] for name, r in sorted(report.fitted_rates.items())]
    _write_csv(out / "rates.csv", ["series", "slope", "r_squared"], rate_rows)
    k = kramers_rate(get_potential(cfg.potential, **cfg.potential_params)).k
    t_lim = np.linspace(0.0, cfg.T, 401)
    _write_xy(out / "limit_u_plus.dat", t_lim, limit_solution(cfg.u0, k, t_lim))
    for name in ("sup_tracking_error", "metric_integral_gap", "energy_integral_gap", "layer_sup_I",
                 "layer_L2T_J0", "rayleigh_gap"):
        pts = [(e, r.get(name)) for e, r in zip(report.epsilons, report.per_eps) if r.get(name) is not None]
        _write_xy(out / f"error_{name}.dat", [p[0] for p in pts], [p[1] for p in pts])
    for e, (t, u) in sorted(report.overlays.items(), reverse=True):
        _write_xy(out / f"overlay_eps{e:g}.dat", t, u)
    lines = [_table(["eps", "tracking", "metric_gap", "layer_I", "status"],
                    [[r["epsilon"], r.get("sup_tracking_error", float("nan")),
                      r.get("metric_integral_gap", float("nan")), r.get("layer_sup_I", float("nan")),
                      r["status"]] for r in report.per_eps]),
             "", "\n".join(f"{k}: {'PASS' if v else 'FAIL'}" for k, v in report.verdicts.items())]
    _emit(args, report.to_dict(), "\n".join(lines))
    if not report.passed:
        print("failed criteria: " + ", ".join(report.failures), file=sys.stderr)
        if any(r["status"].startswith("error: NumericalError") for r in report.per_eps):
            return EXIT_NUMERIC
        return EXIT_FAIL
    return EXIT_OK


def cmd_rayleigh(args) -> int:
    cfg = _config(args, sweep_range=True)
    rows = rayleigh_table(cfg)
    header = ["epsilon", "J_eps", "J_limit", "abs_gap", "min_minimality_gap"]
    if args.out is not None:
        _write_csv(_outdir(cfg) / "rayleigh.csv", header, [[r[h] for h in header] for r in rows])
    _emit(args, {"rows": rows}, _table(header, [[r[h] for h in header] for r in rows]))
    ok = all(r["min_minimality_gap"] >= -MINIMALITY_TOL for r in rows)
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="sectioned key=value run configuration")
    common.add_argument("--potential", metavar="NAME", help="quartic or sextic")
    common.add_argument("--eps", metavar="LIST", help="comma-separated epsilon values")
    common.add_argument("--alpha", type=float, metavar="F")
    common.add_argument("--u0", type=float, metavar="F")
    common.add_argument("--T", type=float, metavar="F", dest="T")
    common.add_argument("--out", metavar="DIR", help="output directory (nothing is written elsewhere)")
    common.add_argument("--seed", type=int, metavar="N")
    common.add_argument("--json", action="store_true", help="print a JSON document instead of a table")

    parser = argparse.ArgumentParser(prog="kramerslab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="audit the potential and tabulate measure asymptotics")
    sub.add_parser("rate", parents=[common], help="print k, tau_eps and the asymptotic partition function")
    sub.add_parser("simulate", parents=[common], help="evolve one epsilon and write snapshots and diagnostics")
    sp = sub.add_parser("sweep", parents=[common], help="epsilon sweep with report.json, rates.csv and plot data")
    sp.add_argument("--workers", type=int, default=1, help="parallel processes for the per-epsilon runs")
    sub.add_parser("rayleigh", parents=[common], help="integrated Rayleigh functionals and minimality gaps")
    return parser


COMMANDS = {"check": cmd_check, "rate": cmd_rate, "simulate": cmd_simulate, "sweep": cmd_sweep,
            "rayleigh": cmd_rayleigh}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, DomainError, AssumptionError, PositivityError, FitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
