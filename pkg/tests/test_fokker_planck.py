import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import context, operator, trajectory
from kramerslab.errors import ConfigurationError, DomainError, PositivityError
from kramerslab.fokker_planck import (Custom, GradingSpec, Grid, TimeControls, WellPrepared, assemble_operator,
                                      build_grid, default_dt, evolve, initial_condition, step)
from kramerslab.measure import make_context
from kramerslab.potential import quartic


def dense_generator(op):
    # oracle: A = M^-1 K / tau built entry by entry from the face conductances
    n = op.grid.size
    K = np.zeros((n, n))
    c = np.exp(op.log_conductance)
    for f, cf in enumerate(c):
        K[f, f] -= cf
        K[f + 1, f + 1] -= cf
        K[f, f + 1] += cf
        K[f + 1, f] += cf
    return K / (op.ctx.tau * op.mass[:, None])


def test_uniform_grid():
    g = build_grid(3.0, 400)
    assert g.size == 400
    np.testing.assert_allclose(g.cell_widths, 0.015, rtol=1e-12)


def test_geometric_grid_is_symmetric_and_refined():
    g = build_grid(3.0, 400, GradingSpec(epsilon=0.2))
    np.testing.assert_allclose(g.face_positions, -g.face_positions[::-1], atol=1e-15)
    assert 0.0 in g.face_positions
    assert g.cell_widths.min() == pytest.approx(0.25 * 0.04, rel=0.05)
    assert g.cell_widths[1:-1].max() <= 6.0 / 400 + 1e-12
    assert g.cell_widths[0] < 1.5 * 6.0 / 400  # the wall cell absorbs the remainder


@pytest.mark.parametrize("L,n,kind", [(2.0, 400, "uniform"), (3.0, 100, "uniform"), (3.0, 400, "cubic")])
def test_grid_rejects_bad_settings(L, n, kind):
    with pytest.raises(ConfigurationError):
        build_grid(L, n, GradingSpec(kind=kind))


def test_grid_faces_must_increase():
    with pytest.raises(ConfigurationError):
        Grid.from_faces([0.0, 1.0, 1.0, 2.0])


def test_grid_beyond_domain_rejected():
    with pytest.raises(ConfigurationError):
        assemble_operator(make_context(quartic(), 0.3, length=2.5), build_grid(3.0, 400))


def test_constants_span_the_kernel():
    op = operator(0.3)
    assert np.max(np.abs(op.apply(np.full(op.grid.size, 1.7)))) == 0.0


def test_operator_matches_dense_oracle():
    op = operator(0.4)
    u = np.cos(np.linspace(0, 5, op.grid.size))
    np.testing.assert_allclose(op.apply(u), dense_generator(op) @ u, rtol=1e-10, atol=1e-12)


def test_operator_self_adjoint_and_dissipative():
    op = operator(0.35)
    rng = np.random.default_rng(3)
    u, v = rng.normal(size=(2, op.grid.size))
    assert op.inner(op.apply(u), v) == pytest.approx(op.inner(u, op.apply(v)), rel=1e-9)
    assert op.inner(op.apply(u), u) <= 0.0
    assert op.dirichlet_form(u) == pytest.approx(-op.inner(op.apply(u), u), rel=1e-9)


def test_cell_masses_sum_to_one():
    assert math.fsum(operator(0.25).mass) == pytest.approx(1.0, abs=1e-13)


@pytest.mark.parametrize("theta", [1.0, 0.5])
def test_flux_step_matches_dense_solve(theta):
    op = operator(0.4)
    state = initial_condition(op.ctx, op.grid, WellPrepared(1.5), op)
    dt = 0.01
    A = dense_generator(op)
    n = op.grid.size
    rhs = (np.eye(n) + (1 - theta) * dt * A) @ state.values
    ref = np.linalg.solve(np.eye(n) - theta * dt * A, rhs)
    np.testing.assert_allclose(step(state, op, dt, theta).values, ref, rtol=1e-9, atol=1e-11)


def test_constant_field_is_stationary():
    op = operator(0.3)
    state = initial_condition(op.ctx, op.grid, Custom(np.full(op.grid.size, 0.8)), op)
    assert np.max(np.abs(step(state, op, 0.05).values - 0.8)) <= 1e-15


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), dt=st.floats(1e-4, 1.0))
def test_implicit_step_keeps_max_principle_and_mass(seed, dt):
    op = operator(0.3)
    u = np.random.default_rng(seed).uniform(0.1, 1.9, op.grid.size)
    state = initial_condition(op.ctx, op.grid, Custom(u), op)
    new = step(state, op, dt)
    assert u.min() - 1e-12 <= new.values.min() and new.values.max() <= u.max() + 1e-12
    assert new.mass() == pytest.approx(state.mass(), abs=1e-12)


def test_step_argument_checks():
    op = operator(0.3)
    state = initial_condition(op.ctx, op.grid, WellPrepared(1.5), op)
    with pytest.raises(DomainError):
        step(state, op, 0.0)
    with pytest.raises(DomainError):
        step(state, op, 0.01, theta=0.3)


def test_well_prepared_profile():
    op = operator(0.3)
    state = initial_condition(op.ctx, op.grid, WellPrepared(1.5), op)
    assert state.values.min() == pytest.approx(0.5) and state.values.max() == pytest.approx(1.5)
    assert set(state.info) == {"min_u", "weighted_l2", "scaled_dirichlet"}
    assert state.info["weighted_l2"] == pytest.approx(1.25, rel=1e-2)
    assert state.mass() == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("spec,exc", [(WellPrepared(2.0), DomainError), (WellPrepared(0.0), DomainError),
                                      (Custom([1.0, 2.0]), ConfigurationError), ("flat", ConfigurationError)])
def test_initial_condition_errors(spec, exc):
    op = operator(0.3)
    with pytest.raises(exc):
        initial_condition(op.ctx, op.grid, spec, op)


def test_nonpositive_or_nan_profile_rejected():
    op = operator(0.3)
    for bad in (0.0, math.nan):
        u = np.ones(op.grid.size)
        u[10] = bad
        with pytest.raises(PositivityError):
            initial_condition(op.ctx, op.grid, Custom(u), op)


def test_default_dt_hits_residual_target():
    k = 4 * math.sqrt(2) / math.pi
    dt = default_dt(k, 0.5)
    assert dt < 1e-2
    assert (dt * k * 0.5) ** 2 <= 1e-6
    assert default_dt(0.0, 0.5) == 1e-2


def test_trajectory_bookkeeping():
    tr = trajectory(0.35, T=0.5, dt=0.01)
    assert tr.n_steps == 50 and tr.dt == pytest.approx(0.01)
    assert tr.snapshot_index[0] == 0 and tr.snapshot_index[-1] == 50
    assert tr.step_velocities.shape == (50, tr.grid.size)
    assert tr.field(50).time == pytest.approx(0.5)


def test_mirror_initial_data_gives_mirror_trajectory():
    a = trajectory(0.35, u0=1.5, T=0.5, dt=0.01)
    b = trajectory(0.35, u0=0.5, T=0.5, dt=0.01)
    np.testing.assert_allclose(a.states[-1], b.states[-1][::-1], atol=1e-10)
    np.testing.assert_allclose(a.states[-1], 2.0 - b.states[-1], atol=1e-10)


def test_mass_conserved_along_trajectory():
    tr = trajectory(0.25, T=0.5, dt=0.01)
    m = tr.op.mass
    drift = np.abs(tr.states @ m - tr.states[0] @ m)
    assert drift.max() <= 1e-12


def test_evolve_rejects_bad_time():
    op = operator(0.3)
    state = initial_condition(op.ctx, op.grid, WellPrepared(1.5), op)
    with pytest.raises(DomainError):
        evolve(op.ctx, op.grid, state, 0.0, TimeControls(dt=0.01), op)
