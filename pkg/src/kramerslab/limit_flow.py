"""The two-state limit: u' = -k(u - 1) as a gradient flow on (0, 2).

Energy E(u) = (u log u + (2-u) log(2-u)) / 2, metric
g_u(v, v) = v^2 log(u/(2-u)) / (2k(u-1)), which equals v^2 atanh(u-1) / (k(u-1)).
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .asymptotics import atanh_ratio
from .errors import DomainError


def _check_u(u):
    arr = np.asarray(u, dtype=float)
    if not np.all((arr > 0.0) & (arr < 2.0)):
        raise DomainError("u must lie in (0, 2)")
    return arr


def limit_solution(u0: float, k: float, t):
    if not 0.0 < u0 < 2.0:
        raise DomainError(f"u0 must lie in (0, 2), got {u0}")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise DomainError("t must be nonnegative")
    out = 1.0 + (u0 - 1.0) * np.exp(-k * t)
    return float(out) if out.ndim == 0 else out


def limit_velocity(u0: float, k: float, t):
    return -k * (np.asarray(limit_solution(u0, k, t)) - 1.0)


def limit_energy(u):
    """Return (E(u), dE) where DE(u)v = dE * v."""
    u = _check_u(u)
    e = 0.5 * (u * np.log(u) + (2.0 - u) * np.log(2.0 - u))
    de = np.arctanh(u - 1.0)  # = log(u/(2-u)) / 2
    if e.ndim == 0:
        return float(e), float(de)
    return e, de


def metric_coefficient(u, k: float):
    """g_u(1, 1); the extension 1/k is used within 1e-8 of u = 1."""
    u = _check_u(u)
    return atanh_ratio(u - 1.0) / k


def limit_metric(u, v, k: float):
    return metric_coefficient(u, k) * np.asarray(v, dtype=float) ** 2


def limit_rayleigh(u_path: Callable, v_path: Callable, T: float, k: float,
                   panels: int = 256, nodes: int = 8) -> float:
    """int_0^T [g_u(v, v)/2 + DE(u) v] dt by composite Gauss-Legendre in t.

    ``panels`` uniform panels; a multiple of the partition of a piecewise
    constant v keeps the rule exact on each piece.
    """
    t, w = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(0.0, T, panels + 1)
    half = 0.5 * np.diff(edges)[:, None]
    ts = (0.5 * (edges[1:] + edges[:-1]))[:, None] + half * t[None, :]
    ts, ws = ts.ravel(), (half * w[None, :]).ravel()
    u = np.broadcast_to(np.asarray(u_path(ts), dtype=float), ts.shape)
    _check_u(u)
    v = np.broadcast_to(np.asarray(v_path(ts), dtype=float), ts.shape)
    _, de = limit_energy(u)
    integrand = 0.5 * metric_coefficient(u, k) * v * v + de * v
    return math.fsum(integrand * ws)


def limit_dissipation(u0: float, k: float, T: float, panels: int = 256, nodes: int = 8) -> tuple[float, float]:
    """(int_0^T g_u(u', u') dt, int_0^T DE(u) u' dt) along the exact solution.

    Both are computed by quadrature; the gradient-flow balance makes them
    negatives of each other, and the second equals E(u(T)) - E(u0).
    """
    if not T > 0.0:
        raise DomainError(f"T must be positive, got {T}")
    u = lambda t: limit_solution(u0, k, t)
    v = lambda t: limit_velocity(u0, k, t)
    t, w = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(0.0, T, panels + 1)
    half = 0.5 * np.diff(edges)[:, None]
    ts = ((0.5 * (edges[1:] + edges[:-1]))[:, None] + half * t[None, :]).ravel()
    ws = (half * w[None, :]).ravel()
    uu, vv = np.asarray(u(ts)), np.asarray(v(ts))
    _, de = limit_energy(uu)
    return math.fsum(limit_metric(uu, vv, k) * ws), math.fsum(de * vv * ws)
