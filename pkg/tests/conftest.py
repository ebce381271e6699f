from functools import lru_cache

import pytest

from kramerslab.fokker_planck import (GradingSpec, TimeControls, WellPrepared, assemble_operator, build_grid,
                                      evolve, initial_condition)
from kramerslab.measure import make_context
from kramerslab.potential import quartic, sextic

QUARTIC = quartic()
SEXTIC = sextic(0.5)


@lru_cache(maxsize=None)
def context(eps, alpha=0.5, name="quartic"):
    return make_context(QUARTIC if name == "quartic" else SEXTIC, eps, alpha)


@lru_cache(maxsize=None)
def operator(eps, n_base=400):
    ctx = context(eps)
    grid = build_grid(3.0, n_base, GradingSpec(epsilon=eps))
    return assemble_operator(ctx, grid)


@lru_cache(maxsize=None)
def trajectory(eps, u0=1.5, T=2.0, dt=None, n_base=400):
    op = operator(eps, n_base)
    u_init = initial_condition(op.ctx, op.grid, WellPrepared(u0), op)
    return evolve(op.ctx, op.grid, u_init, T, TimeControls(dt=dt), op)


@pytest.fixture(scope="session")
def quartic_pot():
    return QUARTIC


@pytest.fixture(scope="session")
def sextic_pot():
    return SEXTIC
