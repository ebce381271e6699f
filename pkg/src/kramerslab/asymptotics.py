"""Closed-form limit quantities: the rate k, the layer profile eta, and the
finite-eps quantities whose limits drive the convergence proof."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import AssumptionError, DomainError
from .measure import EpsilonContext, integrate_gamma_weighted, integrate_inverse_gamma, log_quad
from .potential import Potential

# below this distance from u = 1 the (u-1)-quotients switch to their continuous extension
SINGULAR_BAND = 1e-8


@dataclass(frozen=True)
class RateConstant:
    k: float
    curvature_barrier: float
    curvature_well: float


def kramers_rate(p: Potential) -> RateConstant:
    c0, c1 = p.curvature_barrier, p.curvature_well
    if not c0 < 0.0 < c1:
        raise AssumptionError(f"need H''(0) < 0 < H''(1), got {c0}, {c1}")
    return RateConstant(math.sqrt(-c0 * c1) / math.pi, c0, c1)


def atanh_ratio(z):
    """atanh(z) / z, continuous through z = 0."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < SINGULAR_BAND
    safe = np.where(small, 0.5, z)
    out = np.where(small, 1.0 + z * z / 3.0, np.arctanh(safe) / safe)
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=64)
def _log_inverse_gamma(ctx: EpsilonContext, a: float, b: float) -> float:
    # log of int_a^b dy / gamma, without the tau factor
    return log_quad(lambda x: -ctx.log_gamma(x), a, b, ctx.quad)


def eta(ctx: EpsilonContext, x: float) -> float:
    """2 int_0^x dy/gamma / int_{-1}^{1} dy/gamma by quadrature (odd in x)."""
    if not abs(x) <= ctx.length:
        raise DomainError(f"|x| = {abs(x)} exceeds the domain half-length {ctx.length}")
    if x == 0.0:
        return 0.0
    num = _log_inverse_gamma(ctx, 0.0, abs(x))
    den = _log_inverse_gamma(ctx, 0.0, 1.0)  # symmetric gamma: half of int_{-1}^{1}
    try:
        return math.copysign(math.exp(num - den), x)
    except OverflowError:
        return math.copysign(math.inf, x)


def u_tilde(ctx: EpsilonContext, u: float, x: float) -> float:
    if not 0.0 < u < 2.0:
        raise DomainError(f"u must lie in (0, 2), got {u}")
    return 1.0 + (u - 1.0) * eta(ctx, x)


def lemma_L2_integral(ctx: EpsilonContext, u: float, k: float | None = None) -> tuple[float, float]:
    """Integral of tau / (gamma u_tilde) over J0 and its eps -> 0 limit.

    Since tau / (gamma u_tilde) = tau R / (2(u-1)) * d/dx log u_tilde with
    R = int_{-1}^{1} dy/gamma, the J0 integral is tau R atanh((u-1) eta(d)) / (u-1),
    d = eps^alpha.  The limit is (2 / (k (u-1))) log(u / (2-u)) = (4/k) atanh(u-1)/(u-1).
    """
    if not 0.0 < u < 2.0:
        raise DomainError(f"u must lie in (0, 2), got {u}")
    k = kramers_rate(ctx.potential).k if k is None else k
    d = ctx.intervals.width
    eta_d = eta(ctx, d)
    log_tau_r = ctx.log_tau + math.log(2.0) + _log_inverse_gamma(ctx, 0.0, 1.0)
    z = (u - 1.0) * eta_d
    finite = math.exp(log_tau_r) * eta_d * atanh_ratio(z)
    limit = 4.0 / k * atanh_ratio(u - 1.0)
    return finite, limit


@dataclass(frozen=True)
class L0Row:
    name: str
    value: float
    target: float
    deviation: float


def _sample(pieces, n=4001):
    return np.concatenate([np.linspace(a, b, n) for a, b in pieces])


def lemma_L0_report(ctx: EpsilonContext, k: float | None = None) -> list[L0Row]:
    """The six measure quantities with their eps -> 0 targets.

    Deviation is |value - target| for finite targets and 1/value for the
    quantity that diverges, so every deviation column should shrink to 0.
    """
    k = kramers_rate(ctx.potential).k if k is None else k
    iv = ctx.intervals
    rows = []
    jp = integrate_gamma_weighted(ctx, None, iv.J_plus)
    jm = integrate_gamma_weighted(ctx, None, iv.J_minus)
    rows.append(L0Row("int_J_pm_gamma", jp, 0.5, max(abs(jp - 0.5), abs(jm - 0.5))))
    jb = integrate_gamma_weighted(ctx, None, list(iv.J_bar))
    rows.append(L0Row("int_J_bar_gamma", jb, 0.0, abs(jb)))
    sup_bar = float(np.exp(np.max(ctx.log_gamma(_sample(iv.J_bar)))))
    rows.append(L0Row("sup_J_bar_gamma", sup_bar, 0.0, sup_bar))
    inf_i = float(np.exp(np.min(ctx.log_gamma(_sample(iv.I))) - ctx.log_tau))
    rows.append(L0Row("inf_I_gamma_over_tau", inf_i, math.inf, 1.0 / inf_i))
    j0 = integrate_inverse_gamma(ctx, None, iv.J_zero)
    rows.append(L0Row("int_J0_tau_over_gamma", j0, 4.0 / k, abs(j0 - 4.0 / k)))
    ii = integrate_inverse_gamma(ctx, None, list(iv.I))
    rows.append(L0Row("int_I_tau_over_gamma", ii, 0.0, abs(ii)))
    return rows
