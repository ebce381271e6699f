"""Invariant measure gamma_eps = exp(-H/eps^2) / Z_eps and weighted integrals.

Every density is handled through its logarithm.  At eps = 0.2 the barrier
factor exp(-1/eps^2) is already 1e-11 and the far field exp(-H(3)/eps^2)
underflows outright, so products and ratios are formed as sums and
differences of logs and exponentiated last.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .errors import AssumptionError, ConfigurationError, DomainError, NumericalError
from .potential import Potential

Interval = tuple[float, float]
IntervalLike = Union[Interval, Sequence[Interval]]

DEFAULT_ALPHA = 0.5
DEFAULT_LENGTH = 3.0
FOCI = (-1.0, 0.0, 1.0)
TINY_WIDTH = 1e-12


@dataclass(frozen=True)
class QuadratureSettings:
    """Composite Gauss-Legendre rule with panels graded toward the foci.

    ``levels`` geometric halvings are placed on each side of every breakpoint;
    the panel set is then bisected until two successive results agree to
    ``tol`` (relative), at most ``max_bisections`` times.
    """

    nodes: int = 16
    levels: int = 14
    tol: float = 1e-10
    max_bisections: int = 6

    def __post_init__(self):
        if self.nodes < 2 or self.levels < 0 or not self.tol > 0 or self.max_bisections < 1:
            raise ConfigurationError(f"invalid quadrature settings {self}")


@lru_cache(maxsize=None)
def _leggauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def _breakpoints(a: float, b: float, levels: int, foci=FOCI) -> np.ndarray:
    pts = sorted({a, b, *(c for c in foci if a < c < b)})
    edges = [pts[0]]
    for p, q in zip(pts[:-1], pts[1:]):
        m = 0.5 * (p + q)
        frac = 0.5 ** np.arange(levels, 0, -1)
        left = p + (m - p) * frac
        right = q - (q - m) * frac[::-1]
        edges.extend(left)
        edges.append(m)
        edges.extend(right)
        edges.append(q)
    return np.asarray(edges)


def _nodes(edges: np.ndarray, n: int):
    t, w = _leggauss(n)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    x = (lo + hi) * 0.5 + half * t[None, :]
    wts = half * w[None, :]
    return x.ravel(), wts.ravel()


def _refine(edges: np.ndarray) -> np.ndarray:
    mids = 0.5 * (edges[:-1] + edges[1:])
    out = np.empty(2 * edges.size - 1)
    out[0::2] = edges
    out[1::2] = mids
    return out


def log_quad(logf: Callable[[np.ndarray], np.ndarray], a: float, b: float,
             settings: QuadratureSettings = QuadratureSettings(), foci=FOCI) -> float:
    """log of the integral of exp(logf) over [a, b], adaptively refined."""
    if b < a:
        raise DomainError(f"interval ({a}, {b}) is reversed")
    if b == a:
        return -math.inf
    if b - a < TINY_WIDTH * max(1.0, abs(a), abs(b)):
        # panels this narrow lose their nodes to rounding; one point is exact to O(width^2)
        return float(logf(np.array([0.5 * (a + b)]))[0]) + math.log(b - a)
    edges = _breakpoints(a, b, settings.levels, foci)
    prev, change = None, math.inf
    for _ in range(settings.max_bisections + 1):
        x, w = _nodes(edges, settings.nodes)
        cur = float(logsumexp(logf(x) + np.log(w)))
        if prev is not None:
            change = 0.0 if cur == prev else abs(math.expm1(cur - prev))
            if change < settings.tol:
                return cur
        prev = cur
        edges = _refine(edges)
    raise NumericalError(f"log-quadrature on ({a}, {b}) did not converge", achieved=change)


def signed_quad(f: Callable[[np.ndarray], np.ndarray], a: float, b: float,
                settings: QuadratureSettings = QuadratureSettings(), foci=FOCI,
                scale: float | None = None) -> float:
    """Integral of a possibly sign-changing f, summed with compensation.

    Convergence is judged relative to ``scale`` (default: integral of |f|),
    so integrals that cancel to zero still terminate.
    """
    if b < a:
        raise DomainError(f"interval ({a}, {b}) is reversed")
    if b == a:
        return 0.0
    if b - a < TINY_WIDTH * max(1.0, abs(a), abs(b)):
        return float(np.broadcast_to(f(np.array([0.5 * (a + b)])), (1,))[0]) * (b - a)
    edges = _breakpoints(a, b, settings.levels, foci)
    prev, change = None, math.inf
    for _ in range(settings.max_bisections + 1):
        x, w = _nodes(edges, settings.nodes)
        vals = np.broadcast_to(f(x), x.shape) * w
        cur = math.fsum(vals)
        ref = scale if scale is not None else math.fsum(np.abs(vals))
        if prev is not None:
            change = abs(cur - prev)
            if change <= settings.tol * max(ref, 1e-300):
                return cur
        prev = cur
        edges = _refine(edges)
    raise NumericalError(f"quadrature on ({a}, {b}) did not converge", achieved=change)


@dataclass(frozen=True)
class IntervalFamily:
    """Neighbourhoods of the wells (J+-), of the barrier (J0) and between them (I+-).

    ``J_bar`` is the complement of J+ u J- inside [-L, L], stored as a union of
    closed pieces.  ``outer`` is the point where H returns to the barrier
    height, so that I+ = (eps^alpha, outer - eps^alpha).
    """

    width: float
    outer: float
    length: float
    J_plus: Interval
    J_minus: Interval
    J_zero: Interval
    J_bar: tuple[Interval, ...]
    I_plus: Interval
    I_minus: Interval

    @property
    def I(self) -> tuple[Interval, Interval]:
        return (self.I_minus, self.I_plus)

    @classmethod
    def build(cls, width: float, outer: float, length: float) -> "IntervalFamily":
        d = width
        if not 2.0 * d < outer:
            raise ConfigurationError(
                f"eps^alpha = {d:.4g} too wide: I-intervals (d, {outer:.4g} - d) are empty"
            )
        if not 1.0 + d < length:
            raise ConfigurationError(f"J+ = (1-{d:.3g}, 1+{d:.3g}) leaves the domain [-{length}, {length}]")
        if not outer < length:
            raise ConfigurationError(f"I+ ends at {outer:.4g}, beyond the domain length {length}")
        j_bar = ((-length, -1.0 - d), (-1.0 + d, 1.0 - d), (1.0 + d, length))
        return cls(
            width=d, outer=outer, length=length,
            J_plus=(1.0 - d, 1.0 + d), J_minus=(-1.0 - d, -1.0 + d), J_zero=(-d, d),
            J_bar=j_bar, I_plus=(d, outer - d), I_minus=(-outer + d, -d),
        )


@dataclass(frozen=True)
class EpsilonContext:
    potential: Potential
    epsilon: float
    alpha: float
    length: float
    log_tau: float
    log_partition: float
    intervals: IntervalFamily
    quad: QuadratureSettings = field(default_factory=QuadratureSettings)

    @property
    def tau(self) -> float:
        return math.exp(self.log_tau)

    @property
    def inv_eps2(self) -> float:
        return 1.0 / self.epsilon**2

    @property
    def partition(self) -> float:
        return math.exp(self.log_partition)

    def log_gamma(self, x):
        return -self.potential.h(np.asarray(x, dtype=float)) * self.inv_eps2 - self.log_partition

    def gamma(self, x):
        return np.exp(self.log_gamma(x))

    def truncation_mass_bound(self) -> float:
        """Bound on the gamma-mass outside [-L, L], from H(x) >= H(L) + H'(L)(x - L)."""
        L = self.length
        slope = float(self.potential.dh(np.float64(L))) * self.inv_eps2
        if slope <= 0.0:
            return math.inf
        return 2.0 * math.exp(float(self.log_gamma(L)) - math.log(slope))


def log_tau(epsilon: float) -> float:
    """log of tau_eps = eps^-2 exp(-1/eps^2)."""
    return -2.0 * math.log(epsilon) - 1.0 / epsilon**2


def make_context(p: Potential, epsilon: float, alpha: float = DEFAULT_ALPHA,
                 quad: QuadratureSettings | None = None, length: float = DEFAULT_LENGTH) -> EpsilonContext:
    if not 0.0 < epsilon < 1.0:
        raise ConfigurationError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}")
    quad = quad or QuadratureSettings()
    intervals = IntervalFamily.build(epsilon**alpha, p.barrier_level_point(), float(length))
    inv = 1.0 / epsilon**2
    logz = log_quad(lambda x: -p.h(x) * inv, -length, length, quad)
    return EpsilonContext(p, float(epsilon), float(alpha), float(length),
                          log_tau(epsilon), logz, intervals, quad)


def log_gamma(ctx: EpsilonContext, x):
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > ctx.length):
        raise DomainError(f"x outside the truncated domain [-{ctx.length}, {ctx.length}]")
    out = ctx.log_gamma(x)
    return float(out) if out.ndim == 0 else out


def asymptotic_partition(p: Potential, epsilon: float) -> float:
    """Leading-order Laplace value eps * 2 sqrt(2 pi) / sqrt(H''(1)) of Z_eps."""
    c = p.curvature_well
    if not c > 0.0:
        raise AssumptionError(f"H''(1) = {c} must be positive")
    return epsilon * 2.0 * math.sqrt(2.0 * math.pi) / math.sqrt(c)


def _pieces(interval: IntervalLike, length: float) -> list[Interval]:
    if len(interval) == 2 and np.isscalar(interval[0]):
        pieces = [tuple(map(float, interval))]
    else:
        pieces = [tuple(map(float, iv)) for iv in interval]
    for a, b in pieces:
        if a > b:
            raise DomainError(f"interval ({a}, {b}) is reversed")
        if a < -length - 1e-12 or b > length + 1e-12:
            raise DomainError(f"interval ({a}, {b}) leaves the truncated domain")
    return pieces


def _weighted(ctx, f, interval, log_weight):
    f = f if f is not None else (lambda x: np.ones_like(x))
    total = 0.0
    for a, b in _pieces(interval, ctx.length):
        if a == b:
            continue
        probe = np.linspace(a, b, 257)
        fv = np.broadcast_to(f(probe), probe.shape)
        if np.all(fv > 0.0) or np.all(fv < 0.0):
            sign = 1.0 if fv[0] > 0.0 else -1.0
            lf = lambda x: np.log(np.abs(np.broadcast_to(f(x), x.shape))) + log_weight(x)
            with np.errstate(divide="ignore"):
                total += sign * math.exp(log_quad(lf, a, b, ctx.quad))
        else:
            scale = math.exp(log_quad(log_weight, a, b, ctx.quad)) * float(np.max(np.abs(fv)))
            total += signed_quad(lambda x: f(x) * np.exp(log_weight(x)), a, b, ctx.quad, scale=scale)
    return total


def integrate_gamma_weighted(ctx: EpsilonContext, f=None, interval: IntervalLike | None = None) -> float:
    """Integral of f * gamma_eps over ``interval`` (default: whole domain); f defaults to 1."""
    interval = interval if interval is not None else (-ctx.length, ctx.length)
    return _weighted(ctx, f, interval, ctx.log_gamma)


def integrate_inverse_gamma(ctx: EpsilonContext, f=None, interval: IntervalLike | None = None) -> float:
    """Integral of f * tau_eps / gamma_eps over ``interval``; f defaults to 1."""
    if interval is None:
        raise DomainError("an interval is required: tau/gamma is astronomically large in the far field")
    return _weighted(ctx, f, interval, lambda x: ctx.log_tau - ctx.log_gamma(x))
