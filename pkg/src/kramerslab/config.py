"""Run configuration: a sectioned key=value file plus command-line overrides.

Example::

    [potential]
    name = quartic

    [run]
    eps = 0.35, 0.3, 0.25
    alpha = 0.5
    u0 = 1.5
    T = 2
    seed = 42

    [grid]
    L = 3
    n_base = 400
    grading = geometric

    [time]
    dt = auto
    theta = 1

Unknown sections or keys are rejected, so typos fail loudly.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .fokker_planck import GradingSpec, TimeControls
from .measure import QuadratureSettings

EPS_FLOOR = 0.08
EPS_CEILING = 0.5


@dataclass(frozen=True)
class RunConfig:
    potential: str = "quartic"
    potential_params: dict = field(default_factory=dict)
    epsilons: tuple[float, ...] = (0.35, 0.3, 0.25)
    alpha: float = 0.5
    u0: float = 1.5
    u0_profile: str | None = None
    T: float = 2.0
    L: float = 3.0
    n_base: int = 400
    grading: str = "geometric"
    grading_ratio: float = 1.04
    fine_factor: float = 0.25
    dt: float | None = None
    theta: float = 1.0
    snapshots_per_unit: float = 100.0
    target_residual: float = 1e-6
    quad_nodes: int = 16
    quad_levels: int = 14
    quad_tol: float = 1e-10
    seed: int = 42
    n_perturbations: int = 50
    out: str = "out"

    def grading_spec(self, epsilon: float) -> GradingSpec:
        if self.grading == "uniform":
            return GradingSpec(kind="uniform")
        return GradingSpec(kind=self.grading, ratio=self.grading_ratio, epsilon=epsilon,
                           fine_factor=self.fine_factor)

    def time_controls(self) -> TimeControls:
        return TimeControls(dt=self.dt, theta=self.theta, snapshots_per_unit=self.snapshots_per_unit,
                            target_residual=self.target_residual)

    def quadrature(self) -> QuadratureSettings:
        return QuadratureSettings(nodes=self.quad_nodes, levels=self.quad_levels, tol=self.quad_tol)

    def validate(self, sweep_range: bool = True) -> "RunConfig":
        """Check every value that can be checked without running anything."""
        if not self.epsilons:
            raise ConfigurationError("at least one epsilon is required")
        for e in self.epsilons:
            if not 0.0 < e < 1.0:
                raise ConfigurationError(f"epsilon {e} outside (0, 1)")
            if sweep_range and not EPS_FLOOR <= e <= EPS_CEILING:
                raise ConfigurationError(
                    f"epsilon {e} outside [{EPS_FLOOR}, {EPS_CEILING}]; below {EPS_FLOOR} "
                    "tau_eps loses double precision")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError(f"alpha {self.alpha} outside (0, 1)")
        if self.u0_profile is None and not 0.0 < self.u0 < 2.0:
            raise ConfigurationError(f"u0 {self.u0} outside (0, 2)")
        if not self.T > 0.0:
            raise ConfigurationError(f"T must be positive, got {self.T}")
        if self.dt is not None and not self.dt > 0.0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if not 0.5 <= self.theta <= 1.0:
            raise ConfigurationError(f"theta {self.theta} outside [1/2, 1]")
        if self.grading not in ("uniform", "geometric"):
            raise ConfigurationError(f"unknown grading {self.grading!r}")
        if self.n_perturbations < 1:
            raise ConfigurationError("n_perturbations must be at least 1")
        if not self.snapshots_per_unit > 0.0:
            raise ConfigurationError("snapshots_per_unit must be positive")
        self.quadrature()
        return self

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["epsilons"] = list(self.epsilons)
        out["potential_params"] = dict(sorted(self.potential_params.items()))
        return out


# (section, key) -> (field name, parser)
def _float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(f"{s!r} is not finite")
    return v


def _opt_float(s: str):
    return None if s.strip().lower() in ("auto", "none", "") else _float(s)


def parse_eps_list(s: str) -> tuple[float, ...]:
    try:
        vals = tuple(_float(t) for t in s.replace(";", ",").split(",") if t.strip())
    except ValueError as exc:
        raise ConfigurationError(f"bad epsilon list {s!r}: {exc}") from None
    if not vals:
        raise ConfigurationError("empty epsilon list")
    return vals


_KEYS = {
    ("potential", "name"): ("potential", str),
    ("run", "eps"): ("epsilons", parse_eps_list),
    ("run", "alpha"): ("alpha", _float),
    ("run", "u0"): ("u0", _float),
    ("run", "u0_profile"): ("u0_profile", str),
    ("run", "t"): ("T", _float),
    ("run", "seed"): ("seed", int),
    ("run", "n_perturbations"): ("n_perturbations", int),
    ("grid", "l"): ("L", _float),
    ("grid", "n_base"): ("n_base", int),
    ("grid", "grading"): ("grading", str),
    ("grid", "ratio"): ("grading_ratio", _float),
    ("grid", "fine_factor"): ("fine_factor", _float),
    ("time", "dt"): ("dt", _opt_float),
    ("time", "theta"): ("theta", _float),
    ("time", "snapshots_per_unit"): ("snapshots_per_unit", _float),
    ("time", "target_residual"): ("target_residual", _float),
    ("quadrature", "nodes"): ("quad_nodes", int),
    ("quadrature", "levels"): ("quad_levels", int),
    ("quadrature", "tol"): ("quad_tol", _float),
    ("output", "dir"): ("out", str),
}


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file {str(path)!r} not found")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(path.read_text())
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from None
    updates: dict = {}
    params: dict = {}
    for section in cp.sections():
        for key, raw in cp.items(section):
            sk = (section.lower(), key.lower())
            if section.lower() == "potential" and key.lower() != "name":
                try:
                    params[key] = _float(raw)
                except ValueError:
                    raise ConfigurationError(f"potential parameter {key} = {raw!r} is not a number") from None
                continue
            if sk not in _KEYS:
                raise ConfigurationError(f"unknown setting [{section}] {key}")
            name, conv = _KEYS[sk]
            try:
                updates[name] = conv(raw)
            except (ValueError, ConfigurationError) as exc:
                raise ConfigurationError(f"[{section}] {key} = {raw!r}: {exc}") from None
    if params:
        updates["potential_params"] = params
    return replace(base or RunConfig(), **updates)


def load_profile(path: str | Path, size: int) -> np.ndarray:
    """One value per line (or whitespace-separated columns x u; the last column is used)."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"initial profile {str(path)!r} not found")
    try:
        data = np.loadtxt(path, ndmin=2)
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse initial profile {path}: {exc}") from None
    values = data[:, -1]
    if values.size != size:
        raise ConfigurationError(f"initial profile has {values.size} values, grid has {size} cells")
    return values
