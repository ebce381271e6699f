"""Symmetric double-well enthalpies with wells at +-1 and barrier at 0.

A :class:`Potential` bundles H, H' and H'' as vectorised callables.  Two
families ship with the package (see :data:`POTENTIALS`); anything else can be
wrapped directly, e.g. for negative tests of the assumption audit.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import AssumptionError, DomainError, ConfigurationError

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class Potential:
    name: str
    h: ArrayFn
    dh: ArrayFn
    d2h: ArrayFn
    params: dict = field(default_factory=dict)
    well_location: float = 1.0

    def __call__(self, x):
        return self.h(np.asarray(x, dtype=float))

    @property
    def barrier_height(self) -> float:
        return float(self.h(np.float64(0.0)))

    @property
    def curvature_barrier(self) -> float:
        return float(self.d2h(np.float64(0.0)))

    @property
    def curvature_well(self) -> float:
        return float(self.d2h(np.float64(1.0)))

    def barrier_level_point(self, upper: float = 50.0) -> float:
        """Return the point x* > 1 where H climbs back to the barrier height H(0).

        For the normalisation H(+-2) = H(0) this is 2; for the plain quartic
        it is sqrt(2).  The outer ends of the I-intervals sit at x* - eps**alpha.
        """
        level = self.barrier_height
        g = lambda x: float(self.h(np.float64(x))) - level
        hi = 2.0
        while g(hi) <= 0.0:
            hi *= 2.0
            if hi > upper:
                raise AssumptionError(f"{self.name}: H never returns to H(0) on (1, {upper})")
        return brentq(g, 1.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def eval_potential(p: Potential, x: float) -> tuple[float, float, float]:
    """Return (H(x), H'(x), H''(x))."""
    if not np.isfinite(x):
        raise DomainError(f"potential evaluated at non-finite x={x!r}")
    x = np.float64(x)
    return float(p.h(x)), float(p.dh(x)), float(p.d2h(x))


def quartic() -> Potential:
    """H(x) = (x^2 - 1)^2: barrier 1 at 0, H''(0) = -4, H''(1) = 8."""
    return Potential(
        name="quartic",
        h=lambda x: (x * x - 1.0) ** 2,
        dh=lambda x: 4.0 * x * (x * x - 1.0),
        d2h=lambda x: 12.0 * x * x - 4.0,
    )


def sextic(shape: float = 0.5) -> Potential:
    """H(x) = a s^2 + b s^3 with s = x^2 - 1, b = ``shape`` and a = 1 + b.

    a - b = 1 pins H(0) = 1.  Admissibility needs 0 <= b < 2: b >= 0 keeps H
    nonnegative for large x and b < 2 keeps H' < 0 on (0, 1).
    H''(0) = -2(2 - b), H''(1) = 8(1 + b).
    """
    b = float(shape)
    if not 0.0 <= b < 2.0:
        raise ConfigurationError(f"sextic shape parameter must lie in [0, 2), got {b}")
    a = 1.0 + b

    def h(x):
        s = x * x - 1.0
        return s * s * (a + b * s)

    def dh(x):
        s = x * x - 1.0
        return 2.0 * x * s * (2.0 * a + 3.0 * b * s)

    def d2h(x):
        s = x * x - 1.0
        # d/dx [2x s (2a + 3bs)] with ds/dx = 2x
        return 2.0 * s * (2.0 * a + 3.0 * b * s) + 4.0 * x * x * (2.0 * a + 6.0 * b * s)

    return Potential(name="sextic", h=h, dh=dh, d2h=d2h, params={"shape": b})


POTENTIALS: dict[str, Callable[..., Potential]] = {
    "quartic": quartic,
    "sextic": sextic,
}


def get_potential(name: str, **params) -> Potential:
    try:
        factory = POTENTIALS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown potential {name!r}; choose from {sorted(POTENTIALS)}"
        ) from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for potential {name!r}: {exc}") from None


@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    worst: float
    advisory: bool = False
    detail: str = ""


@dataclass
class AssumptionReport:
    potential: str
    checks: list[AssumptionCheck]

    @property
    def core_passed(self) -> bool:
        return all(c.passed for c in self.checks if not c.advisory)

    @property
    def failures(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed and not c.advisory]

    @property
    def advisories(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed and c.advisory]

    def __getitem__(self, name: str) -> AssumptionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def rows(self) -> list[dict]:
        return [
            {
                "check": c.name,
                "passed": c.passed,
                "worst": c.worst,
                "advisory": c.advisory,
                "detail": c.detail,
            }
            for c in self.checks
        ]


def check_assumptions(p: Potential, sample_count: int = 801, tol: float = 1e-10) -> AssumptionReport:
    """Audit the double-well assumptions on a symmetric sample of [-4, 4].

    Failures are returned as report entries, never raised.  H(+-2) = 1 is
    audited as advisory only.
    """
    if sample_count < 100:
        raise ConfigurationError("sample_count must be at least 100")
    exact = np.array([0.0, 1.0, -1.0, 2.0, -2.0])
    half = np.linspace(0.0, 4.0, (sample_count + 1) // 2)
    x = np.unique(np.concatenate([-half, half, exact]))
    H, dH = p.h(x), p.dh(x)
    checks = []

    even = float(np.max(np.abs(H - p.h(-x))))
    checks.append(AssumptionCheck("evenness", even <= tol, even))

    neg = float(max(0.0, -np.min(H)))
    checks.append(AssumptionCheck("nonnegativity", neg <= tol, neg))

    ax = np.abs(x)
    inner = (ax > 0.0) & (ax < 1.0)
    outer = ax > 1.0
    xdh = x * dH
    bad_inner = float(max(0.0, np.max(xdh[inner], initial=-np.inf)))
    checks.append(AssumptionCheck("sign_inner", bool(np.all(xdh[inner] < 0.0)), bad_inner,
                                  detail="x H'(x) < 0 for 0 < |x| < 1"))
    bad_outer = float(max(0.0, -np.min(xdh[outer], initial=np.inf)))
    checks.append(AssumptionCheck("sign_outer", bool(np.all(xdh[outer] > 0.0)), bad_outer,
                                  detail="x H'(x) > 0 for |x| > 1"))

    pts = np.array([1.0, -1.0])
    bv = float(max(np.max(np.abs(p.h(pts))), np.max(np.abs(p.dh(pts))), abs(p.dh(np.float64(0.0)))))
    checks.append(AssumptionCheck("boundary_values", bv <= tol, bv,
                                  detail="H(+-1) = H'(+-1) = H'(0) = 0"))

    norm = abs(p.barrier_height - 1.0)
    checks.append(AssumptionCheck("barrier_normalisation", norm <= tol, norm, detail="H(0) = 1"))

    c0 = p.curvature_barrier
    c1 = min(float(p.d2h(np.float64(1.0))), float(p.d2h(np.float64(-1.0))))
    checks.append(AssumptionCheck("curvature", c0 < 0.0 < c1, max(c0, -c1, 0.0),
                                  detail=f"H''(0) = {c0:g}, H''(+-1) = {c1:g}"))

    h2 = float(max(abs(p.h(np.float64(2.0)) - 1.0), abs(p.h(np.float64(-2.0)) - 1.0)))
    checks.append(AssumptionCheck("outer_normalisation", h2 <= tol, h2, advisory=True,
                                  detail=f"H(+-2) = {float(p.h(np.float64(2.0))):g}"))
    return AssumptionReport(p.name, checks)


def derivative_consistency(p: Potential, points, h: float) -> float:
    """Largest central-difference mismatch against the analytic H' and H''."""
    if not h > 0.0:
        raise DomainError(f"step h must be positive, got {h}")
    x = np.asarray(points, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("points must be finite")
    hp, h0, hm = p.h(x + h), p.h(x), p.h(x - h)
    d1 = (hp - hm) / (2.0 * h)
    d2 = (hp - 2.0 * h0 + hm) / (h * h)
    return float(max(np.max(np.abs(d1 - p.dh(x))), np.max(np.abs(d2 - p.d2h(x)))))
