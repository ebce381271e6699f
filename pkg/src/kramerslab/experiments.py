"""Epsilon sweeps: run the solver, evaluate diagnostics, fit rates, decide verdicts."""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics as dg
from .asymptotics import kramers_rate, lemma_L0_report, lemma_L2_integral
from .config import EPS_FLOOR, RunConfig, load_profile
from .errors import ConfigurationError, FitError, KramersError
from .fokker_planck import (Custom, Trajectory, WellPrepared, assemble_operator, build_grid, evolve,
                            initial_condition)
from .limit_flow import metric_coefficient
from .measure import EpsilonContext, make_context
from .potential import get_potential

MINIMALITY_TOL = 1e-6
BALANCE_TOL = 1e-4
TRACKING_CAP = 0.05
RECOVERY_TOL = 0.10
MASS_TOL = 1e-10
MONOTONE_TOL = 1e-13  # slack for "nonincreasing" comparisons between consecutive states
ERROR_FLOOR = 1e-12   # a series entirely below this counts as converged


def fit_rate(errors) -> tuple[float, float]:
    """Least-squares slope of log e against log eps, with r^2."""
    pts = [(float(e), float(v)) for e, v in errors]
    if len(pts) < 3:
        raise FitError(f"need at least 3 points, got {len(pts)}")
    eps = np.array([p[0] for p in pts])
    err = np.array([p[1] for p in pts])
    if np.any(~np.isfinite(err)) or np.any(err <= 0.0) or np.any(eps <= 0.0):
        raise FitError(f"errors must be positive and finite: {err.tolist()}")
    x, y = np.log(eps), np.log(err)
    if np.unique(x).size < 2:
        raise FitError("all epsilon values coincide; the slope is undetermined")
    X = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0.0 else 1.0
    return float(coef[0]), r2


def strictly_decreasing(values, floor: float = ERROR_FLOOR) -> bool:
    """Strict decrease along the list, or every value already at the floor."""
    vals = [v for v in values]
    if any(v is None or not math.isfinite(v) for v in vals):
        return False
    if all(abs(v) <= floor for v in vals):
        return True
    return all(b < a for a, b in zip(vals[:-1], vals[1:]))


# ---------------------------------------------------------------- competitors

def _sine_potential(faces: np.ndarray, coeffs: np.ndarray, support: float) -> np.ndarray:
    """psi(x) = sum_j a_j sin(j pi (x + s) / (2 s)) on |x| < s, zero outside; evaluated at faces."""
    x = np.clip(faces, -support, support)
    j = np.arange(1, coeffs.size + 1)
    return np.sin(np.pi * np.outer(x + support, j) / (2.0 * support)) @ coeffs


def minimality_probe(traj: Trajectory, ctx: EpsilonContext | None = None, n_perturbations: int = 50,
                     seed: int = 42, pieces: int = 64) -> list[float]:
    """Gaps J(v_i) - J(recorded velocity) for random tangent competitors.

    Draw 0 is the recorded velocity itself.  Every other competitor mixes the
    recorded velocity, a recovery-shape velocity with a piecewise constant
    amplitude drawn from [-2, 2] on ``pieces`` time intervals, and the
    x-derivative of a random smooth compactly supported profile (so its
    integral vanishes by telescoping).  Each third draw is a small
    perturbation of the recorded velocity only.
    """
    ctx = ctx or traj.ctx
    rng = np.random.default_rng(seed)
    v_star = traj.step_velocities
    base = dg.functional_value(traj, v_star)
    grid = traj.grid
    rec = dg.recovery_velocity(ctx, grid, 1.0)
    scale = float(np.max(np.abs(v_star))) if v_star.size else 1.0
    t_mid = 0.5 * (traj.times[1:] + traj.times[:-1])
    piece = np.minimum((t_mid / traj.times[-1] * pieces).astype(int), pieces - 1)
    support = min(1.5, 0.5 * grid.length)
    gaps = [dg.functional_value(traj, v_star) - base]
    for i in range(1, n_perturbations):
        coeffs = rng.normal(size=6) / np.arange(1, 7)
        psi = _sine_potential(grid.face_positions, coeffs, support)
        noise = np.diff(psi) / grid.cell_widths
        noise *= scale / max(float(np.max(np.abs(noise))), 1e-300)
        amp_noise = rng.uniform(-1.0, 1.0, pieces)[piece]
        if i % 3 == 0:
            sigma = 10.0 ** rng.uniform(-4.0, -1.0)
            v = v_star + sigma * amp_noise[:, None] * noise[None, :]
        else:
            lam = rng.uniform(0.0, 1.0)
            V = rng.uniform(-2.0, 2.0, pieces)[piece]
            sigma = rng.uniform(0.0, 0.5)
            v = ((1.0 - lam) * v_star + lam * V[:, None] * rec[None, :]
                 + sigma * amp_noise[:, None] * noise[None, :])
        gaps.append(dg.functional_value(traj, v) - base)
    return gaps


# ---------------------------------------------------------------- single runs

@dataclass
class Run:
    epsilon: float
    ctx: EpsilonContext
    traj: Trajectory


def build_context(config: RunConfig, epsilon: float) -> EpsilonContext:
    p = get_potential(config.potential, **config.potential_params)
    return make_context(p, epsilon, config.alpha, config.quadrature(), config.L)


def prepare(config: RunConfig, epsilon: float):
    """Context, grid, operator and initial field, without time stepping."""
    ctx = build_context(config, epsilon)
    grid = build_grid(config.L, config.n_base, config.grading_spec(epsilon))
    op = assemble_operator(ctx, grid)
    if config.u0_profile is not None:
        spec = Custom(load_profile(config.u0_profile, grid.size))
    else:
        spec = WellPrepared(config.u0)
    u_init = initial_condition(ctx, grid, spec, op)
    return ctx, grid, op, u_init


def simulate(config: RunConfig, epsilon: float) -> Run:
    ctx, grid, op, u_init = prepare(config, epsilon)
    traj = evolve(ctx, grid, u_init, config.T, config.time_controls(), op)
    return Run(epsilon, ctx, traj)


def _reference_u0(config: RunConfig, run: Run) -> float:
    if config.u0_profile is None:
        return config.u0
    return dg.masses(run.traj.field(0)).u_plus


def evaluate_run(config: RunConfig, run: Run) -> dict:
    """Every per-epsilon quantity recorded in a sweep report."""
    traj, ctx = run.traj, run.ctx
    u0 = _reference_u0(config, run)
    k = kramers_rate(ctx.potential).k
    out: dict = {"epsilon": run.epsilon, "status": "ok", "n_cells": traj.grid.size,
                 "n_steps": traj.n_steps, "dt": traj.dt, "tau": ctx.tau,
                 "truncation_mass_bound": ctx.truncation_mass_bound()}
    out.update(dg.limit_comparison(traj, u0))

    mass = traj.states @ traj.op.mass
    out["mass_drift"] = float(np.max(np.abs(mass - mass[0])))
    mins, maxs = traj.states.min(axis=1), traj.states.max(axis=1)
    out["max_principle"] = bool(np.all(np.diff(mins) >= -MONOTONE_TOL) and np.all(np.diff(maxs) <= MONOTONE_TOL))
    energy = dg.energy_series(traj)
    out["energy_max_increase"] = float(np.max(np.diff(energy))) if energy.size > 1 else 0.0
    out["energy_monotone"] = bool(out["energy_max_increase"] <= MONOTONE_TOL)
    out["energy_initial_excess"] = float(energy[0] + ctx.log_partition)

    ap = dg.apriori_residuals(traj)
    out.update(apriori1_max_step=ap.max_step1, apriori2_max_step=ap.max_step2,
               apriori1_cumulative=float(abs(ap.cumulative1[-1])),
               apriori2_cumulative=float(abs(ap.cumulative2[-1])))

    rr = dg.rayleigh_epsilon(traj, ctx, u0=u0)
    gaps = minimality_probe(traj, ctx, config.n_perturbations, config.seed)
    rr.minimality_gaps = gaps
    half_diss = 0.5 * rr.metric_integral
    out.update(
        J_eps=rr.eps_functional, J_limit=rr.limit_functional,
        rayleigh_gap=abs(rr.eps_functional - rr.limit_functional),
        metric_integral=rr.metric_integral, limit_metric_integral=rr.limit_metric_integral,
        metric_integral_gap=abs(rr.metric_integral - rr.limit_metric_integral),
        energy_integral=rr.energy_integral, limit_energy_integral=rr.limit_energy_integral,
        energy_integral_gap=abs(rr.energy_integral - rr.limit_energy_integral),
        balance_error=(abs(rr.eps_functional + half_diss) / half_diss if half_diss > 0.0
                       else abs(rr.eps_functional)),
        tangent_residual=rr.tangent_residual,
        min_minimality_gap=float(min(gaps)), n_competitors=len(gaps),
    )

    idx = traj.snapshot_index
    out["_overlay"] = (traj.times[idx], dg.u_plus_series(traj)[idx])

    le = dg.layer_error(traj, ctx)
    out.update(layer_sup_I=le.sup_I_error, layer_L2T_J0=le.L2T_J0_error)

    mid = int(traj.snapshot_index[len(traj.snapshot_index) // 2])
    state = traj.field(mid)
    u_mid = dg.masses(state).u_plus
    g_rec = dg.recovery_metric(state, ctx, 1.0)
    g_lim = float(metric_coefficient(min(max(u_mid, 1e-12), 2.0 - 1e-12), k))
    out.update(recovery_time=float(traj.times[mid]), recovery_metric=g_rec, recovery_limit=g_lim,
               recovery_rel_error=abs(g_rec / g_lim - 1.0))

    l0 = lemma_L0_report(ctx, k)
    out["lemma_L0"] = {r.name: {"value": r.value, "target": r.target, "deviation": r.deviation} for r in l0}
    finite, limit = lemma_L2_integral(ctx, u0 if 0.0 < u0 < 2.0 else 1.0, k)
    out.update(lemma_L2_value=finite, lemma_L2_limit=limit, lemma_L2_rel_deviation=abs(finite / limit - 1.0))
    return out


def _sweep_one(args) -> dict:
    config, eps = args
    try:
        run = simulate(config, eps)
        return evaluate_run(config, run)
    except KramersError as exc:
        return {"epsilon": eps, "status": f"error: {type(exc).__name__}: {exc}"}


# ---------------------------------------------------------------- sweeps

SERIES = ("sup_tracking_error", "metric_integral_gap", "energy_integral_gap", "rayleigh_gap",
          "layer_sup_I", "layer_L2T_J0", "lemma_L2_rel_deviation")


@dataclass
class ConvergenceReport:
    epsilons: list[float]
    per_eps: list[dict]
    fitted_rates: dict
    verdicts: dict
    metadata: dict = field(default_factory=dict)
    overlays: dict = field(default_factory=dict)  # eps -> (t, u+) on the snapshot grid; not serialised

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    @property
    def failures(self) -> list[str]:
        return [k for k, v in self.verdicts.items() if not v]

    def series(self, name: str) -> list:
        return [row.get(name) for row in self.per_eps]

    def to_dict(self) -> dict:
        return {"epsilons": self.epsilons, "per_eps": self.per_eps, "fitted_rates": self.fitted_rates,
                "verdicts": self.verdicts, "metadata": self.metadata}

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), sort_keys=True, indent=2) + "\n"


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _ordered(epsilons) -> list[float]:
    eps = sorted((float(e) for e in epsilons), reverse=True)
    if len(set(eps)) != len(eps):
        raise ConfigurationError(f"duplicate epsilon values in {list(epsilons)}")
    return eps


def _verdicts(rows: list[dict]) -> dict:
    ok = all(r["status"] == "ok" for r in rows)
    if not ok:
        return {"all_runs_completed": False}
    get = lambda key: [r[key] for r in rows]
    l0_names = list(rows[0]["lemma_L0"])
    return {
        "all_runs_completed": True,
        "C3_lemma_L0_deviations_decreasing": all(
            strictly_decreasing([r["lemma_L0"][n]["deviation"] for r in rows], floor=0.0) for n in l0_names),
        "C4_mass_conservation": all(d <= MASS_TOL for d in get("mass_drift")),
        "C4_max_principle": all(get("max_principle")),
        "C5_tracking_decreasing": strictly_decreasing(get("sup_tracking_error")),
        "C5_tracking_cap": rows[-1]["sup_tracking_error"] <= TRACKING_CAP,
        "C6_energy_monotone": all(get("energy_monotone")),
        "C7_minimality": all(g >= -MINIMALITY_TOL for g in get("min_minimality_gap")),
        "C7_dissipation_balance": all(b <= BALANCE_TOL for b in get("balance_error")),
        "C8_metric_gap_decreasing": strictly_decreasing(get("metric_integral_gap")),
        "C8_energy_gap_decreasing": strictly_decreasing(get("energy_integral_gap")),
        "C8_recovery_metric": rows[-1]["recovery_rel_error"] <= RECOVERY_TOL,
        "C9_layer_sup_I_decreasing": strictly_decreasing(get("layer_sup_I")),
        "C9_layer_J0_decreasing": strictly_decreasing(get("layer_L2T_J0")),
    }


def _rates(rows: list[dict]) -> dict:
    out = {}
    for name in SERIES:
        pts = [(r["epsilon"], r.get(name)) for r in rows if r["status"] == "ok"]
        try:
            slope, r2 = fit_rate(pts)
            out[name] = {"slope": slope, "r_squared": r2}
        except FitError as exc:
            out[name] = {"slope": None, "r_squared": None, "reason": str(exc),
                         "raw": [v for _, v in pts]}
    return out


def sweep(config: RunConfig, epsilons=None, workers: int = 1) -> ConvergenceReport:
    """Run every epsilon, evaluate, fit and judge.  Failed runs are recorded, not raised."""
    eps = _ordered(config.epsilons if epsilons is None else epsilons)
    for e in eps:
        if not EPS_FLOOR <= e <= 0.5:
            raise ConfigurationError(f"sweep epsilon {e} outside [{EPS_FLOOR}, 0.5]")
    jobs = [(config, e) for e in eps]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    settings = config.as_dict()
    settings.pop("out")  # where the report lands is not part of what it reports
    meta = {"config": settings, "epsilon_floor": EPS_FLOOR,
            "tolerances": {"minimality": MINIMALITY_TOL, "balance": BALANCE_TOL, "tracking_cap": TRACKING_CAP,
                           "recovery": RECOVERY_TOL, "mass": MASS_TOL, "monotone": MONOTONE_TOL,
                           "error_floor": ERROR_FLOOR}}
    overlays = {r["epsilon"]: r.pop("_overlay") for r in rows if "_overlay" in r}
    return ConvergenceReport(eps, rows, _rates(rows), _verdicts(rows), meta, overlays)


def rayleigh_table(config: RunConfig, epsilons=None) -> list[dict]:
    """Per-epsilon functional values and minimality gaps (a lighter sweep)."""
    rows = []
    for e in _ordered(config.epsilons if epsilons is None else epsilons):
        run = simulate(config, e)
        u0 = _reference_u0(config, run)
        rr = dg.rayleigh_epsilon(run.traj, run.ctx, u0=u0)
        gaps = minimality_probe(run.traj, run.ctx, config.n_perturbations, config.seed)
        rows.append({"epsilon": e, "J_eps": rr.eps_functional, "J_limit": rr.limit_functional,
                     "abs_gap": abs(rr.eps_functional - rr.limit_functional),
                     "metric_integral": rr.metric_integral, "energy_integral": rr.energy_integral,
                     "min_minimality_gap": float(min(gaps)), "n_competitors": len(gaps)})
    return rows
