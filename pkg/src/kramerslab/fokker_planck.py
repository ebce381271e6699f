"""Finite-volume solver for tau gamma du/dt = d/dx(gamma du/dx) on [-L, L].

The unknown is the relative density u = rho / gamma at cell centres.  Cell
masses m_i = int_cell gamma dx and face conductances gamma_f / h_f are held
as logarithms.  Each implicit step is solved for the face transports rather
than for u, which keeps every matrix entry a ratio of masses and makes the
mass sum m.u telescope exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import logsumexp

from .errors import ConfigurationError, DomainError, NumericalError, PositivityError
from .measure import EpsilonContext, FOCI


@dataclass(frozen=True)
class GradingSpec:
    """How cell sizes shrink toward the wells and the barrier.

    ``kind="uniform"`` gives n_base equal cells.  ``kind="geometric"`` caps
    cells at 2L/n_base and lets them shrink geometrically (factor ``ratio``
    per cell) down to ``h_min`` at the foci.  When ``epsilon`` is set and
    ``h_min`` is not, h_min = fine_factor * epsilon**2.
    """

    kind: str = "geometric"
    ratio: float = 1.04
    h_min: float | None = None
    epsilon: float | None = None
    fine_factor: float = 0.25
    foci: tuple[float, ...] = FOCI


@dataclass(frozen=True)
class Grid:
    face_positions: np.ndarray
    cell_centers: np.ndarray
    cell_widths: np.ndarray

    @property
    def size(self) -> int:
        return self.cell_centers.size

    @property
    def length(self) -> float:
        return float(self.face_positions[-1])

    @cached_property
    def center_spacing(self) -> np.ndarray:
        return np.diff(self.cell_centers)

    @classmethod
    def from_faces(cls, faces) -> "Grid":
        faces = np.asarray(faces, dtype=float)
        if faces.ndim != 1 or faces.size < 3 or np.any(np.diff(faces) <= 0.0):
            raise ConfigurationError("grid faces must be strictly increasing")
        return cls(faces, 0.5 * (faces[1:] + faces[:-1]), np.diff(faces))


def build_grid(L: float, n_base: int, grading: GradingSpec | None = None) -> Grid:
    if L < 2.5:
        raise ConfigurationError(f"domain half-length L={L} must be at least 2.5")
    if n_base < 200:
        raise ConfigurationError(f"n_base={n_base} must be at least 200")
    grading = grading or GradingSpec(kind="uniform")
    h_max = 2.0 * L / n_base
    if grading.kind == "uniform":
        return Grid.from_faces(np.linspace(-L, L, n_base + 1))
    if grading.kind != "geometric":
        raise ConfigurationError(f"unknown grading kind {grading.kind!r}")
    if not grading.ratio > 1.0:
        raise ConfigurationError(f"grading ratio must exceed 1, got {grading.ratio}")
    if grading.h_min is not None:
        h_min = grading.h_min
    elif grading.epsilon is not None:
        h_min = grading.fine_factor * grading.epsilon**2
    else:
        h_min = h_max / 8.0
    if not 0.0 < h_min:
        raise ConfigurationError(f"h_min must be positive, got {h_min}")
    h_min = min(h_min, h_max)
    foci = np.abs(np.asarray(grading.foci, dtype=float))

    def spacing(x):
        d = float(np.min(np.abs(foci - x)))
        return min(h_max, h_min + (grading.ratio - 1.0) * d)

    # march over [0, L] and mirror, so the grid is exactly symmetric with a face at 0
    half = [0.0]
    while True:
        s = spacing(half[-1] + 0.5 * spacing(half[-1]))
        if half[-1] + 1.5 * s >= L:
            break
        half.append(half[-1] + s)
    half.append(L)
    half = np.asarray(half)
    return Grid.from_faces(np.concatenate([-half[:0:-1], half]))


def _log_cell_masses(ctx: EpsilonContext, faces: np.ndarray, nodes: int = 8) -> np.ndarray:
    t, w = np.polynomial.legendre.leggauss(nodes)
    lo, hi = faces[:-1, None], faces[1:, None]
    half = 0.5 * (hi - lo)
    x = 0.5 * (lo + hi) + half * t[None, :]
    lm = logsumexp(ctx.log_gamma(x) + np.log(half * w[None, :]), axis=1)
    return lm - logsumexp(lm)


@dataclass(frozen=True)
class DiscreteOperator:
    """(Au)_i = [c_{i+1/2}(u_{i+1} - u_i) - c_{i-1/2}(u_i - u_{i-1})] / (tau m_i).

    c_f = gamma_f / h_f with gamma_f the geometric mean of the neighbouring
    centre values.  A is self-adjoint and negative semidefinite in the inner
    product <u, v> = sum m_i u_i v_i; constants span its kernel.
    """

    ctx: EpsilonContext
    grid: Grid
    log_mass: np.ndarray
    log_gamma_centers: np.ndarray
    log_conductance: np.ndarray

    @cached_property
    def mass(self) -> np.ndarray:
        return np.exp(self.log_mass)

    @cached_property
    def upper(self) -> np.ndarray:
        """Coupling of row i to u_{i+1}; zero in the last row (no-flux wall)."""
        out = np.zeros(self.grid.size)
        out[:-1] = np.exp(self.log_conductance - self.ctx.log_tau - self.log_mass[:-1])
        return out

    @cached_property
    def lower(self) -> np.ndarray:
        out = np.zeros(self.grid.size)
        out[1:] = np.exp(self.log_conductance - self.ctx.log_tau - self.log_mass[1:])
        return out

    @cached_property
    def log_resistance(self) -> np.ndarray:
        """log(h_f / gamma_f) on interior faces: integral of 1/gamma between centres."""
        return -self.log_conductance

    def apply(self, u: np.ndarray) -> np.ndarray:
        du = np.diff(u)
        out = np.zeros_like(u)
        out[:-1] += self.upper[:-1] * du
        out[1:] -= self.lower[1:] * du
        return out

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return math.fsum(self.mass * u * v)

    def dirichlet_form(self, u: np.ndarray) -> float:
        """(1/tau) int gamma |du/dx|^2 = -<Au, u>, formed from face gradients."""
        du = np.diff(u)
        with np.errstate(divide="ignore"):
            terms = np.exp(self.log_conductance - self.ctx.log_tau + 2.0 * np.log(np.abs(du)))
        return math.fsum(terms)

    def system(self, dt: float, theta: float) -> np.ndarray:
        """Banded storage of I - theta dt A."""
        ab = np.zeros((3, self.grid.size))
        ab[0, 1:] = -theta * dt * self.upper[:-1]
        ab[2, :-1] = -theta * dt * self.lower[1:]
        ab[1] = 1.0 + theta * dt * (self.upper + self.lower)
        return ab

    def flux_system(self, dt: float, theta: float):
        """The same implicit step posed for the face transports.

        With Phi_f = (dt/tau) c_f (theta du_new + (1-theta) du_old)_f, the update
        is m_i (u_new - u_old)_i = Phi_i - Phi_{i-1}, and Phi solves
        (tau/(dt c_f)) Phi_f - theta [D Phi]_f = (du_old)_f with D the
        mass-weighted difference operator.  Unknowns are scaled as
        Phi_f = s_f Psi_f, s_f = min(m_f, m_{f+1}), which keeps every entry a
        ratio of masses and the matrix column diagonally dominant.

        Returns (banded matrix, a, b) with u_new = u_old + a Psi_i - b Psi_{i-1}.
        """
        lm = self.log_mass
        log_s = np.minimum(lm[:-1], lm[1:])
        log_r = self.ctx.log_tau - math.log(dt) - self.log_conductance
        nf = log_s.size
        ab = np.zeros((3, nf))
        ab[1] = np.exp(log_r + log_s) + theta * (np.exp(log_s - lm[:-1]) + np.exp(log_s - lm[1:]))
        ab[0, 1:] = -theta * np.exp(log_s[1:] - lm[1:-1])   # coefficient of Psi_{f+1} in row f
        ab[2, :-1] = -theta * np.exp(log_s[:-1] - lm[1:-1])  # coefficient of Psi_{f-1} in row f
        a = np.zeros(self.grid.size)
        b = np.zeros(self.grid.size)
        a[:-1] = np.exp(log_s - lm[:-1])
        b[1:] = np.exp(log_s - lm[1:])
        return ab, a, b

    @cached_property
    def zero_index(self) -> float:
        """Fractional centre index of x = 0 (i + 0.5 when 0 is a face)."""
        return float(np.interp(0.0, self.grid.cell_centers, np.arange(self.grid.size)))

    def _log_resistance_from_zero(self) -> np.ndarray:
        """log of int_0^{x_i} dy / gamma along centres, by prefix sums outward from 0."""
        xc = self.grid.cell_centers
        lr = self.log_resistance
        n = xc.size
        k = int(np.searchsorted(xc, 0.0, side="right")) - 1  # xc[k] <= 0 < xc[k+1]
        out = np.full(n, -np.inf)
        if xc[k] == 0.0:
            left_start, right_start = k - 1, k + 1
            first_left = lr[k - 1]
            first_right = lr[k]
        else:
            h = xc[k + 1] - xc[k]
            left_start, right_start = k, k + 1
            first_left = lr[k] + math.log(-xc[k] / h)
            first_right = lr[k] + math.log(xc[k + 1] / h)
        out[right_start:] = np.logaddexp.accumulate(np.concatenate([[first_right], lr[right_start:]]))
        left = np.logaddexp.accumulate(np.concatenate([[first_left], lr[:left_start][::-1]]))
        out[: left_start + 1] = left[::-1]
        return out

    @cached_property
    def log_half_resistance(self) -> float:
        """log of int_0^1 dy / gamma on the grid (linear in the last partial segment)."""
        xc = self.grid.cell_centers
        lr0 = self._log_resistance_from_zero()
        j = int(np.searchsorted(xc, 1.0, side="right")) - 1
        frac = (1.0 - xc[j]) / (xc[j + 1] - xc[j])
        if frac <= 0.0:
            return float(lr0[j])
        return float(np.logaddexp(lr0[j], self.log_resistance[j] + math.log(frac)))

    @cached_property
    def eta(self) -> np.ndarray:
        """Transition-layer profile at the centres: odd, 0 at x=0, +-1 at x=+-1, unbounded beyond."""
        lr0 = self._log_resistance_from_zero()
        with np.errstate(over="ignore"):
            return np.sign(self.grid.cell_centers) * np.exp(lr0 - self.log_half_resistance)


def assemble_operator(ctx: EpsilonContext, grid: Grid) -> DiscreteOperator:
    if grid.length > ctx.length * (1 + 1e-12) or grid.face_positions[0] < -ctx.length * (1 + 1e-12):
        raise ConfigurationError("grid extends beyond the truncated domain")
    lgc = ctx.log_gamma(grid.cell_centers)
    lm = _log_cell_masses(ctx, grid.face_positions)
    log_gamma_faces = 0.5 * (lgc[1:] + lgc[:-1])
    log_cond = log_gamma_faces - np.log(grid.center_spacing)
    return DiscreteOperator(ctx, grid, lm, lgc, log_cond)


@dataclass
class Field:
    op: DiscreteOperator
    values: np.ndarray
    time: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.op.grid

    @property
    def rho(self) -> np.ndarray:
        """Cell-averaged density m_i u_i / w_i."""
        return self.op.mass * self.values / self.grid.cell_widths

    def mass(self) -> float:
        return math.fsum(self.op.mass * self.values)


@dataclass(frozen=True)
class WellPrepared:
    u0: float


@dataclass(frozen=True)
class Custom:
    values: Sequence[float]


def initial_condition(ctx: EpsilonContext, grid: Grid, spec, op: DiscreteOperator | None = None) -> Field:
    """Build u_eps^0.

    ``WellPrepared(u0)`` gives 1 + (u0 - 1) eta with eta clipped to [-1, 1]:
    past the wells eta grows like 1/gamma, and the clipped profile is the
    flat continuation that keeps u between u0 and 2 - u0.
    """
    op = op or assemble_operator(ctx, grid)
    if isinstance(spec, WellPrepared):
        u0 = float(spec.u0)
        if not 0.0 < u0 < 2.0:
            raise DomainError(f"u0 must lie in (0, 2), got {u0}")
        values = 1.0 + (u0 - 1.0) * np.clip(op.eta, -1.0, 1.0)
    elif isinstance(spec, Custom):
        values = np.asarray(spec.values, dtype=float).copy()
        if values.shape != (grid.size,):
            raise ConfigurationError(f"custom profile has {values.size} values, grid has {grid.size} cells")
        if not np.all(values > 0.0):
            raise PositivityError("custom initial profile must be strictly positive")
    else:
        raise ConfigurationError(f"unknown initial condition spec {spec!r}")
    info = {
        "min_u": float(values.min()),
        "weighted_l2": op.inner(values, values),
        "scaled_dirichlet": op.dirichlet_form(values),
    }
    return Field(op, values, 0.0, info)


def step(state: Field, op: DiscreteOperator, dt: float, theta: float = 1.0, system=None) -> Field:
    """One theta-scheme step: (I - theta dt A) u_new = (I + (1 - theta) dt A) u_old.

    Solved through the face transports (see :meth:`DiscreteOperator.flux_system`),
    so the mass sum m.u changes only by the rounding of a telescoping sum.
    """
    if not dt > 0.0:
        raise DomainError(f"dt must be positive, got {dt}")
    if not 0.5 <= theta <= 1.0:
        raise DomainError(f"theta must lie in [1/2, 1], got {theta}")
    u = state.values
    ab, a, b = system if system is not None else op.flux_system(dt, theta)
    try:
        psi = solve_banded((1, 1), ab, np.diff(u), check_finite=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - diagonally dominant for dt > 0
        raise NumericalError(f"tridiagonal solve failed: {exc}") from exc
    incr = np.zeros_like(u)
    incr[:-1] += a[:-1] * psi
    incr[1:] -= b[1:] * psi
    return Field(op, u + incr, state.time + dt)


@dataclass(frozen=True)
class TimeControls:
    dt: float | None = None
    theta: float = 1.0
    snapshots_per_unit: float = 100.0
    target_residual: float = 1e-6
    max_dt: float = 1e-2


def default_dt(rate: float, amplitude: float, target_residual: float = 1e-6, max_dt: float = 1e-2) -> float:
    """Step size keeping the per-step energy-identity defects below the target.

    Implicit Euler leaves a defect of about |du|^2 per step in both identities,
    and du ~ dt * rate * amplitude for the slow exchange mode; a factor 1/2
    is kept in reserve.
    """
    speed = rate * amplitude * max(1.0, math.sqrt(rate / 2.0))
    if speed <= 0.0:
        return max_dt
    return min(max_dt, 0.5 * math.sqrt(target_residual) / speed)


@dataclass
class Trajectory:
    op: DiscreteOperator
    times: np.ndarray
    states: np.ndarray
    snapshot_index: np.ndarray
    dt: float
    theta: float
    controls: TimeControls

    @property
    def ctx(self) -> EpsilonContext:
        return self.op.ctx

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def snapshots(self) -> list[Field]:
        return [Field(self.op, self.states[i], float(self.times[i])) for i in self.snapshot_index]

    @cached_property
    def step_velocities(self) -> np.ndarray:
        """Cell-averaged d rho/dt over each step, shape (n_steps, n_cells)."""
        return np.diff(self.states, axis=0) * (self.op.mass / self.grid.cell_widths) / self.dt

    @property
    def grid(self) -> Grid:
        return self.op.grid

    def field(self, i: int) -> Field:
        return Field(self.op, self.states[i], float(self.times[i]))


def evolve(ctx: EpsilonContext, grid: Grid, u0: Field, T: float,
           controls: TimeControls | None = None, op: DiscreteOperator | None = None) -> Trajectory:
    """March u0 to rescaled time T with a fixed step; every step is stored."""
    if not T > 0.0:
        raise DomainError(f"final time must be positive, got {T}")
    controls = controls or TimeControls()
    op = op or u0.op
    if op.grid is not grid and op.grid.size != grid.size:
        raise ConfigurationError("initial field lives on a different grid")
    if controls.dt is None:
        from .asymptotics import kramers_rate

        amp = float(np.max(np.abs(u0.values - 1.0)))
        dt_max = default_dt(kramers_rate(ctx.potential).k, amp, controls.target_residual, controls.max_dt)
    else:
        dt_max = controls.dt
    n_steps = max(1, math.ceil(T / dt_max - 1e-9))
    dt = T / n_steps
    stride = max(1, round(n_steps / max(1.0, T * controls.snapshots_per_unit)))
    snaps = np.unique(np.append(np.arange(0, n_steps + 1, stride), n_steps))

    states = np.empty((n_steps + 1, grid.size))
    states[0] = u0.values
    system = op.flux_system(dt, controls.theta)
    state = Field(op, u0.values.copy(), 0.0)
    for n in range(1, n_steps + 1):
        state = step(state, op, dt, controls.theta, system=system)
        if not np.all(np.isfinite(state.values)):
            raise NumericalError(
                f"non-finite values at step {n} (t={n * dt:.6g}); "
                f"previous min/max {states[n - 1].min():.6g}/{states[n - 1].max():.6g}"
            )
        states[n] = state.values
    times = dt * np.arange(n_steps + 1)
    return Trajectory(op, times, states, snaps, dt, controls.theta, controls)
