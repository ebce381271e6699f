import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kramerslab.errors import ConfigurationError, DomainError
from kramerslab.potential import (POTENTIALS, Potential, check_assumptions, derivative_consistency,
                                  eval_potential, get_potential, quartic, sextic)


def single_well():
    return Potential("single", h=lambda x: x * x, dh=lambda x: 2.0 * x, d2h=lambda x: 2.0 + 0.0 * x)


def test_quartic_values_at_barrier_and_well():
    p = quartic()
    assert eval_potential(p, 0.0) == (1.0, 0.0, -4.0)
    assert eval_potential(p, 1.0) == (0.0, 0.0, 8.0)


@pytest.mark.parametrize("x", [math.nan, math.inf, -math.inf])
def test_eval_rejects_non_finite(x):
    with pytest.raises(DomainError):
        eval_potential(quartic(), x)


@pytest.mark.parametrize("p", [quartic(), sextic(0.0), sextic(0.5), sextic(1.5)])
def test_even_potential_has_flat_barrier(p):
    assert eval_potential(p, 0.0)[1] == 0.0


def test_quartic_audit_passes_core_and_flags_outer_normalisation():
    rep = check_assumptions(quartic())
    assert rep.core_passed
    assert rep.advisories == ["outer_normalisation"]
    assert rep["outer_normalisation"].worst == pytest.approx(8.0)  # H(2) = 9
    assert rep["boundary_values"].worst == 0.0


def test_single_well_fails_inner_sign_condition():
    rep = check_assumptions(single_well())
    assert not rep.core_passed
    assert "sign_inner" in rep.failures


def test_barrier_height_other_than_one_is_a_hard_failure():
    p = Potential("tall", h=lambda x: 2.0 * (x * x - 1.0) ** 2, dh=lambda x: 8.0 * x * (x * x - 1.0),
                  d2h=lambda x: 24.0 * x * x - 8.0)
    rep = check_assumptions(p)
    assert rep.failures == ["barrier_normalisation"]


def test_audit_needs_enough_samples():
    with pytest.raises(ConfigurationError):
        check_assumptions(quartic(), sample_count=50)


@pytest.mark.parametrize("shape", [0.0, 0.3, 1.0, 1.9])
def test_sextic_family_is_admissible(shape):
    p = sextic(shape)
    assert check_assumptions(p).core_passed
    assert p.barrier_height == pytest.approx(1.0, abs=1e-14)
    # hand-derived curvatures
    assert p.curvature_barrier == pytest.approx(-2.0 * (2.0 - shape))
    assert p.curvature_well == pytest.approx(8.0 * (1.0 + shape))


@pytest.mark.parametrize("shape", [-0.1, 2.0, 3.0])
def test_sextic_rejects_inadmissible_shapes(shape):
    with pytest.raises(ConfigurationError):
        sextic(shape)


def test_registry_lookup():
    assert set(POTENTIALS) == {"quartic", "sextic"}
    assert get_potential("sextic", shape=0.25).params == {"shape": 0.25}
    with pytest.raises(ConfigurationError):
        get_potential("triple")
    with pytest.raises(ConfigurationError):
        get_potential("quartic", shape=1.0)


@pytest.mark.parametrize("p", [quartic(), sextic(0.5)])
def test_derivatives_match_central_differences(p):
    pts = [0.0, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0]
    assert derivative_consistency(p, pts, 1e-4) <= 1e-5


def test_derivative_check_converges_at_second_order():
    p = sextic(0.5)
    pts = np.linspace(-2.0, 2.0, 9)
    coarse, fine = derivative_consistency(p, pts, 1e-2), derivative_consistency(p, pts, 1e-3)
    assert 70.0 < coarse / fine < 130.0


def test_derivative_check_exact_on_quadratics():
    p = Potential("quad", h=lambda x: 3.0 * x * x - x + 2.0, dh=lambda x: 6.0 * x - 1.0,
                  d2h=lambda x: 6.0 + 0.0 * x)
    assert derivative_consistency(p, [0.0, 0.5, -1.25], 0.25) < 1e-12


def test_derivative_check_rejects_bad_step():
    with pytest.raises(DomainError):
        derivative_consistency(quartic(), [0.0], 0.0)


def test_barrier_level_point():
    assert quartic().barrier_level_point() == pytest.approx(math.sqrt(2.0), rel=1e-14)
    s = sextic(0.5)
    x = s.barrier_level_point()
    assert x > 1.0 and float(s.h(np.float64(x))) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(x=st.floats(-3.0, 3.0), shape=st.floats(0.0, 1.99))
def test_shipped_potentials_even_and_nonnegative(x, shape):
    for p in (quartic(), sextic(shape)):
        hx, hmx = float(p.h(np.float64(x))), float(p.h(np.float64(-x)))
        assert hx >= 0.0
        assert hx == pytest.approx(hmx, abs=1e-12)
