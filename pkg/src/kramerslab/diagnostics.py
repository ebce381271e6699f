"""Functionals evaluated along discrete trajectories.

Conventions used throughout:

* a velocity is a cell-averaged d rho/dt, so sum(v * w) is its integral;
* its flux is f = -int v dx on interior faces, accumulated from whichever
  end of the domain is nearer, so tiny far-field fluxes are not swamped by
  cancellation in a sum of O(1) terms;
* face densities use gamma_f times the logarithmic mean of u, which makes
  tau sum f^2 / (c_f L(u)) and sum f dlog u exact negatives of each other
  for the scheme's own velocity;
* the state paired with the velocity of step n is the end state u_{n+1}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .asymptotics import kramers_rate
from .errors import ConfigurationError, DomainError, TangentSpaceError
from .fokker_planck import DiscreteOperator, Field, Grid, Trajectory
from .limit_flow import limit_dissipation, limit_energy, limit_metric, limit_solution
from .measure import EpsilonContext

TANGENT_TOL = 1e-10


def _log_gl(ctx: EpsilonContext, lo: np.ndarray, hi: np.ndarray, nodes: int = 8) -> np.ndarray:
    t, w = np.polynomial.legendre.leggauss(nodes)
    lo, hi = np.asarray(lo, float)[:, None], np.asarray(hi, float)[:, None]
    half = 0.5 * (hi - lo)
    x = 0.5 * (lo + hi) + half * t[None, :]
    with np.errstate(divide="ignore"):
        lw = np.log(half * w[None, :])
    return logsumexp(ctx.log_gamma(x) + lw, axis=1)


def cell_fractions(op: DiscreteOperator, a: float, b: float) -> np.ndarray:
    """Share of each cell's gamma-mass lying in [a, b] (1 inside, 0 outside)."""
    faces = op.grid.face_positions
    lo, hi = faces[:-1], faces[1:]
    frac = ((lo >= a) & (hi <= b)).astype(float)
    cut = (lo < b) & (hi > a) & ~((lo >= a) & (hi <= b))
    if np.any(cut):
        clo, chi = np.maximum(lo[cut], a), np.minimum(hi[cut], b)
        frac[cut] = np.exp(_log_gl(op.ctx, clo, chi) - _log_gl(op.ctx, lo[cut], hi[cut]))
    return frac


@dataclass(frozen=True)
class Masses:
    u_plus: float
    u_minus: float
    total: float


def masses(state: Field, ctx: EpsilonContext | None = None) -> Masses:
    """u+- = 2 int_{x >< 0} rho dx; a cell straddling 0 is split by its gamma-mass."""
    op = state.op
    right = cell_fractions(op, 0.0, op.grid.length)
    mu = op.mass * state.values
    plus = math.fsum(mu * right)
    minus = math.fsum(mu * (1.0 - right))
    return Masses(2.0 * plus, 2.0 * minus, plus + minus)


def u_plus_series(traj: Trajectory) -> np.ndarray:
    right = cell_fractions(traj.op, 0.0, traj.grid.length)
    return 2.0 * (traj.states @ (traj.op.mass * right))


@dataclass(frozen=True)
class IntervalMasses:
    J_plus: float
    J_minus: float
    J_bar: float
    rate_J_plus: float | None = None
    rate_J_minus: float | None = None
    rate_J_bar: float | None = None
    abs_rate_J_bar: float | None = None


def interval_masses(state: Field, ctx: EpsilonContext, velocity: np.ndarray | None = None) -> IntervalMasses:
    """rho-mass of J+, J- and their complement; with a velocity also its integrals there."""
    op = state.op
    iv = ctx.intervals
    fp = cell_fractions(op, *iv.J_plus)
    fm = cell_fractions(op, *iv.J_minus)
    fb = 1.0 - fp - fm
    mu = op.mass * state.values
    out = dict(J_plus=math.fsum(mu * fp), J_minus=math.fsum(mu * fm), J_bar=math.fsum(mu * fb))
    if velocity is not None:
        vw = np.asarray(velocity, float) * op.grid.cell_widths
        out.update(rate_J_plus=math.fsum(vw * fp), rate_J_minus=math.fsum(vw * fm),
                   rate_J_bar=math.fsum(vw * fb), abs_rate_J_bar=math.fsum(np.abs(vw) * fb))
    return IntervalMasses(**out)


def energy_epsilon(state: Field, ctx: EpsilonContext | None = None) -> float:
    """int rho (log rho + H/eps^2) dx = sum m u log u - log Z."""
    u = state.values
    if not np.all(u > 0.0):
        raise DomainError("energy needs a strictly positive relative density")
    ctx = ctx or state.op.ctx
    return math.fsum(state.op.mass * u * np.log(u)) - ctx.log_partition


def energy_series(traj: Trajectory) -> np.ndarray:
    u = traj.states
    if not np.all(u > 0.0):
        raise DomainError("energy needs a strictly positive relative density")
    return (u * np.log(u)) @ traj.op.mass - traj.ctx.log_partition


def log_mean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(b - a) / (log b - log a), continuous on the diagonal."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    x = b / a - 1.0
    small = np.abs(x) < 1e-5
    xs = np.where(small, 1.0, x)
    return np.where(small, a * (1.0 + x / 2.0 - x * x / 12.0), a * xs / np.log1p(xs))


def face_fluxes(op: DiscreteOperator, velocity: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fluxes f = -int v on interior faces, and the total integral of v.

    ``velocity`` may hold one step (n,) or many (steps, n).
    """
    vw = np.asarray(velocity, float) * op.grid.cell_widths
    left = np.cumsum(vw, axis=-1)
    right = np.cumsum(vw[..., ::-1], axis=-1)[..., ::-1]
    total = left[..., -1]
    x_face = op.grid.face_positions[1:-1]
    f = np.where(x_face <= 0.0, -left[..., :-1], right[..., 1:])
    return f, total


def _check_tangent(op: DiscreteOperator, velocity: np.ndarray, total: np.ndarray) -> float:
    scale = np.maximum(1.0, np.sum(np.abs(velocity) * op.grid.cell_widths, axis=-1))
    resid = np.abs(total) / scale
    worst = float(np.max(resid))
    if worst > TANGENT_TOL:
        raise TangentSpaceError(f"velocity integral {worst:.3g} (relative) is not zero; "
                                "the flux would not vanish at the right wall")
    return worst


def _face_weight(op: DiscreteOperator, u: np.ndarray) -> np.ndarray:
    """tau / (c_f L(u)) per face: multiplies f^2 to give the metric density."""
    with np.errstate(over="ignore"):
        return np.exp(op.ctx.log_tau - op.log_conductance) / log_mean(u[..., :-1], u[..., 1:])


def metric_from_flux(op: DiscreteOperator, u: np.ndarray, f: np.ndarray) -> np.ndarray:
    """g = tau int f^2 / rho dx with rho at faces = gamma_f L(u)."""
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        lf = 2.0 * np.log(np.abs(f))
        terms = np.exp(op.ctx.log_tau - op.log_conductance + lf) / log_mean(u[..., :-1], u[..., 1:])
    terms = np.where(f == 0.0, 0.0, terms)
    return np.sum(terms, axis=-1)


def energy_rate_from_flux(u: np.ndarray, f: np.ndarray) -> np.ndarray:
    """DE(rho) v = int f d(log u)/dx dx, the integrated-by-parts form."""
    return np.sum(f * np.diff(np.log(u), axis=-1), axis=-1)


def metric_gradient_form(op: DiscreteOperator, u: np.ndarray) -> float:
    """(1/tau) int gamma |du/dx|^2 / u dx for the scheme's own velocity."""
    du = np.diff(u)
    with np.errstate(divide="ignore"):
        terms = np.exp(op.log_conductance - op.ctx.log_tau + 2.0 * np.log(np.abs(du)))
    return math.fsum(terms / log_mean(u[:-1], u[1:]))


def metric_epsilon_step(traj: Trajectory, n: int, form: str = "flux") -> float:
    """g^eps of the recorded velocity of step n (1-based: the step ending at times[n])."""
    if not 1 <= n <= traj.n_steps:
        raise DomainError(f"step index must lie in 1..{traj.n_steps}, got {n}")
    u = traj.states[n]
    if form == "gradient":
        return metric_gradient_form(traj.op, u)
    if form != "flux":
        raise ConfigurationError(f"unknown metric form {form!r}")
    f, total = face_fluxes(traj.op, traj.step_velocities[n - 1])
    _check_tangent(traj.op, traj.step_velocities[n - 1], total)
    return float(metric_from_flux(traj.op, u, f))


def metric_series(traj: Trajectory) -> np.ndarray:
    f, _ = face_fluxes(traj.op, traj.step_velocities)
    return metric_from_flux(traj.op, traj.states[1:], f)


@dataclass
class RayleighReport:
    eps_functional: float
    limit_functional: float
    per_step_metric: np.ndarray
    per_step_energy_rate: np.ndarray
    metric_integral: float
    energy_integral: float
    limit_metric_integral: float
    limit_energy_integral: float
    tangent_residual: float
    minimality_gaps: list[float] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "eps_functional": self.eps_functional,
            "limit_functional": self.limit_functional,
            "metric_integral": self.metric_integral,
            "energy_integral": self.energy_integral,
            "limit_metric_integral": self.limit_metric_integral,
            "limit_energy_integral": self.limit_energy_integral,
            "tangent_residual": self.tangent_residual,
            "min_minimality_gap": min(self.minimality_gaps) if self.minimality_gaps else None,
        }


def rayleigh_epsilon(traj: Trajectory, ctx: EpsilonContext | None = None, velocity: np.ndarray | None = None,
                     u0: float | None = None) -> RayleighReport:
    """Time-integrated functional int [g(v, v)/2 + DE v] dt for a velocity path.

    ``velocity`` has one row per step; the default is the recorded d rho/dt.
    The limit functional is evaluated along 1 + (u0 - 1) exp(-k t) with its
    own velocity; u0 defaults to u+ of the initial state.
    """
    ctx = ctx or traj.ctx
    v = traj.step_velocities if velocity is None else np.asarray(velocity, float)
    if v.shape != traj.step_velocities.shape:
        raise ConfigurationError(f"velocity shape {v.shape} does not match {traj.step_velocities.shape}")
    f, total = face_fluxes(traj.op, v)
    resid = _check_tangent(traj.op, v, total)
    u = traj.states[1:]
    g = metric_from_flux(traj.op, u, f)
    de = energy_rate_from_flux(u, f)
    dt = traj.dt
    metric_int = math.fsum(g) * dt
    energy_int = math.fsum(de) * dt
    k = kramers_rate(ctx.potential).k
    u0 = masses(traj.field(0)).u_plus if u0 is None else u0
    T = float(traj.times[-1])
    lim_g, lim_de = limit_dissipation(u0, k, T)
    return RayleighReport(
        eps_functional=0.5 * metric_int + energy_int,
        limit_functional=0.5 * lim_g + lim_de,
        per_step_metric=g, per_step_energy_rate=de,
        metric_integral=metric_int, energy_integral=energy_int,
        limit_metric_integral=lim_g, limit_energy_integral=lim_de,
        tangent_residual=resid,
    )


def functional_value(traj: Trajectory, velocity: np.ndarray) -> float:
    """eps-level integrated functional only, without the limit comparison."""
    f, total = face_fluxes(traj.op, velocity)
    _check_tangent(traj.op, velocity, total)
    u = traj.states[1:]
    return traj.dt * math.fsum(0.5 * metric_from_flux(traj.op, u, f) + energy_rate_from_flux(u, f))


def _bump_cdf(y: np.ndarray, delta: float) -> np.ndarray:
    # antiderivative of cos^2(pi y / 2 delta) / delta on (-delta, delta), clamped to [0, 1]
    yc = np.clip(y, -delta, delta)
    return 0.5 + (yc + delta / math.pi * np.sin(math.pi * yc / delta)) / (2.0 * delta)


def recovery_velocity(ctx: EpsilonContext, grid: Grid, v: float) -> np.ndarray:
    """Cell averages of (v/2)(psi(x - 1) - psi(x + 1)), psi a cos^2 bump of half-width eps^alpha.

    Its flux equals v/2 on [-1 + eps^alpha, 1 - eps^alpha] and vanishes
    outside [-1 - eps^alpha, 1 + eps^alpha].
    """
    delta = ctx.intervals.width
    if not 1.0 + delta < grid.length:
        raise ConfigurationError(f"bump support 1 + {delta:.3g} reaches the wall at {grid.length}")
    if not delta < 1.0:
        raise ConfigurationError(f"bump half-width {delta:.3g} makes the two bumps overlap")
    faces = grid.face_positions
    up = np.diff(_bump_cdf(faces - 1.0, delta))
    down = np.diff(_bump_cdf(faces + 1.0, delta))
    return 0.5 * v * (up - down) / grid.cell_widths


def recovery_metric(state: Field, ctx: EpsilonContext, v: float) -> float:
    """g^eps at ``state`` of the recovery velocity for the limit velocity v."""
    vel = recovery_velocity(ctx, state.grid, v)
    f, total = face_fluxes(state.op, vel)
    _check_tangent(state.op, vel, total)
    return float(metric_from_flux(state.op, state.values, f))


@dataclass
class LayerError:
    sup_I_error: float
    L2T_J0_error: float
    sup_I_series: np.ndarray
    sup_J0_sq_series: np.ndarray


def layer_error(traj: Trajectory, ctx: EpsilonContext | None = None,
                u_path: Callable[[np.ndarray], np.ndarray] | str = "masses", u0: float | None = None) -> LayerError:
    """Distance of u_eps from 1 + (u(t) - 1) eta on I+- (sup) and on J0 (squared sup, integrated in t).

    ``u_path`` is a callable t -> u(t), ``"masses"`` (u+ of the run) or
    ``"limit"`` (the closed-form ODE solution from u0).
    """
    ctx = ctx or traj.ctx
    t = traj.times
    if callable(u_path):
        uu = np.asarray(u_path(t), float) * np.ones_like(t)
    elif u_path == "masses":
        uu = u_plus_series(traj)
    elif u_path == "limit":
        u0 = masses(traj.field(0)).u_plus if u0 is None else u0
        uu = np.asarray(limit_solution(u0, kramers_rate(ctx.potential).k, t))
    else:
        raise ConfigurationError(f"unknown u_path {u_path!r}")
    xc = traj.grid.cell_centers
    iv = ctx.intervals
    in_I = np.zeros(xc.size, bool)
    for a, b in iv.I:
        in_I |= (xc > a) & (xc < b)
    in_J0 = (xc > iv.J_zero[0]) & (xc < iv.J_zero[1])
    if not in_I.any() or not in_J0.any():
        raise ConfigurationError("grid too coarse: no cell centre inside I or J0")
    eta = traj.op.eta
    sup_I = np.max(np.abs(traj.states[:, in_I] - (1.0 + (uu[:, None] - 1.0) * eta[None, in_I])), axis=1)
    sup_J0 = np.max(np.abs(traj.states[:, in_J0] - (1.0 + (uu[:, None] - 1.0) * eta[None, in_J0])), axis=1)
    sq = sup_J0**2
    l2 = float(np.sum(0.5 * (sq[1:] + sq[:-1]) * np.diff(t)))
    return LayerError(float(np.max(sup_I)), l2, sup_I, sq)


@dataclass
class AprioriResiduals:
    """Per-step defects of the two energy identities and their running sums.

    apriori1: |u|^2 + 2 int_0^t Q(u) dt - |u0|^2, Q(u) = (1/tau) int gamma |u_x|^2.
    apriori2: Q(u)/2 + int_0^t int |rho_t|^2 / gamma dt - Q(u0)/2.
    """

    step1: np.ndarray
    step2: np.ndarray
    cumulative1: np.ndarray
    cumulative2: np.ndarray

    @property
    def max_step1(self) -> float:
        return float(np.max(np.abs(self.step1))) if self.step1.size else 0.0

    @property
    def max_step2(self) -> float:
        return float(np.max(np.abs(self.step2))) if self.step2.size else 0.0


def _dirichlet_rows(op: DiscreteOperator, u: np.ndarray) -> np.ndarray:
    du = np.diff(u, axis=-1)
    with np.errstate(divide="ignore"):
        terms = np.exp(op.log_conductance - op.ctx.log_tau + 2.0 * np.log(np.abs(du)))
    return np.sum(terms, axis=-1)


def apriori_residuals(traj: Trajectory) -> AprioriResiduals:
    """Evaluate both identities term by term from the stored states."""
    op, dt = traj.op, traj.dt
    u = traj.states
    norm2 = (u * u) @ op.mass
    q = _dirichlet_rows(op, u)
    delta = np.diff(u, axis=0)
    dissip = (delta * delta) @ op.mass / dt  # dt * int |rho_t|^2 / gamma
    step1 = np.diff(norm2) + 2.0 * dt * q[1:]
    step2 = 0.5 * np.diff(q) + dissip
    return AprioriResiduals(step1, step2, np.cumsum(step1), np.cumsum(step2))


def limit_comparison(traj: Trajectory, u0: float) -> dict:
    """sup over the snapshot grid of |u+ - u_limit| and related scalars."""
    k = kramers_rate(traj.ctx.potential).k
    idx = traj.snapshot_index
    up = u_plus_series(traj)[idx]
    lim = np.asarray(limit_solution(u0, k, traj.times[idx]))
    return {"sup_tracking_error": float(np.max(np.abs(up - lim))), "u_plus_final": float(up[-1]),
            "u_limit_final": float(lim[-1])}


def limit_energy_gap(state: Field, u0: float) -> float:
    """E^eps(state) - E^eps(gamma) against E(u0) - E(1): returns the first minus the second."""
    e_eps = energy_epsilon(state) + state.op.ctx.log_partition  # E^eps(rho) - E^eps(gamma)
    return e_eps - limit_energy(u0)[0]


__all__ = [
    "Masses", "masses", "u_plus_series", "IntervalMasses", "interval_masses", "cell_fractions",
    "energy_epsilon", "energy_series", "log_mean", "face_fluxes", "metric_from_flux",
    "energy_rate_from_flux", "metric_gradient_form", "metric_epsilon_step", "metric_series",
    "RayleighReport", "rayleigh_epsilon", "functional_value", "recovery_velocity", "recovery_metric",
    "LayerError", "layer_error", "AprioriResiduals", "apriori_residuals", "limit_comparison",
    "limit_energy_gap", "limit_metric",
]
