"""Tests for the cutoff profile and the smoothed kernel."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rieszlab.smoothing import (ProfileError, build_profile, eval_phi, eval_phi_prime, eval_phi_second,
                                junction_table, kernel, kernel_radial_sup)

GRID = [(s, rho) for s in (0.5, 1.5, 6.0) for rho in (0.25, 0.05)]


def one_sided_derivative(f, x, h, side):
    """Fourth-order one-sided difference that never crosses ``x``."""
    c = np.array([-25, 48, -36, 16, -3]) / 12
    pts = x + side * h * np.arange(5)
    return side * float(c @ f(pts)) / h


@pytest.mark.parametrize("s,rho", GRID)
def test_piece_values(s, rho):
    p = build_profile(s, rho)
    # the linear piece cancels terms of size 1/rho
    tol = 8 * np.finfo(float).eps / rho
    assert eval_phi(p, 1 + rho**2) == pytest.approx(1.0, abs=tol)
    assert eval_phi(p, 1 + rho + rho**2) == pytest.approx(0.0, abs=tol)
    inside = np.linspace(1 + rho**2, 1 + rho**2 + rho, 50)[1:-1]
    np.testing.assert_array_equal(eval_phi_prime(p, inside), -1 / rho)
    np.testing.assert_array_equal(eval_phi_second(p, inside), 0.0)


def test_power_piece_closed_form():
    p = build_profile(6.0, 0.25)
    assert eval_phi(p, 0.25) == 0.0078125
    assert eval_phi(p, 1.0) == 1.0
    assert eval_phi_prime(p, 1.0) == 3.5
    assert eval_phi_second(p, 1.0) == 8.75


@pytest.mark.parametrize("s,rho", GRID)
def test_support_is_exact(s, rho):
    p = build_profile(s, rho)
    end = 1 + rho + 2 * rho**2
    tail = np.concatenate([[end], end + np.logspace(-12, 2, 200)])
    for d in range(3):
        np.testing.assert_array_equal(p.evaluate(tail, d), 0.0)
    assert np.all(eval_phi(p, np.linspace(1e-6, 1 + rho + rho**2, 1000)[:-1]) > 0)


@pytest.mark.parametrize("s,rho", GRID)
def test_junctions_are_c2_by_independent_differences(s, rho):
    p = build_profile(s, rho)
    for j in p.junctions:
        h = 1e-3 * rho**2
        for deriv in (0, 1):
            f = lambda r, d=deriv: p.evaluate(r, d)
            left = one_sided_derivative(f, j, h, -1)
            right = one_sided_derivative(f, j, h, +1)
            assert abs(left - right) <= 1e-6 * max(1.0, abs(left))
        vl = float(p.evaluate(np.array([j * (1 - 1e-13)]), 0)[0])
        vr = float(p.evaluate(np.array([j * (1 + 1e-13)]), 0)[0])
        assert abs(vl - vr) <= 1e-8


@pytest.mark.parametrize("s,rho", GRID)
def test_junction_table_reports_continuity(s, rho):
    rows = junction_table(build_profile(s, rho))
    assert [r["junction"] for r in rows] == pytest.approx([1, 1 + rho**2, 1 + rho + rho**2, 1 + rho + 2 * rho**2])
    for r in rows:
        assert max(r["jump_phi"], r["jump_dphi"], r["jump_d2phi"]) <= 1e-6


@pytest.mark.parametrize("s,rho", GRID)
def test_derivative_bound(s, rho):
    p = build_profile(s, rho)
    end = p.support_end
    lo = 0.0 if s >= 1 else 1.0
    grid = np.linspace(lo, end, 10_000)
    assert np.max(np.abs(eval_phi_prime(p, grid))) <= 1.05 / rho
    assert p.bounds["sup_phi_prime"] <= 1.05 / rho


def test_construction_error_names_junction():
    with pytest.raises(ProfileError, match="connector A"):
        build_profile(10.0, 0.25)
    with pytest.raises(ProfileError):
        build_profile(1.0, 0.5)
    with pytest.raises(ProfileError):
        build_profile(0.0, 0.1)


def test_profile_serializes():
    p = build_profile(1.5, 0.05)
    d = p.to_dict()
    assert d["junctions"] == list(p.junctions)
    assert "sup_phi_second" in d["bounds"]
    assert '"rho": 0.05' in p.to_json()


def test_kernel_support_and_linear_regime():
    s, rho, eps = 0.5, 0.25, 0.01
    p = build_profile(s, rho)
    far = np.array([[3 * eps, 0.0], [0.0, -3.5 * eps], [eps * p.support_radius_factor, 0.0]])
    np.testing.assert_array_equal(kernel(p, far, eps), 0.0)
    rng = np.random.default_rng(1)
    d = rng.normal(size=(50, 2))
    d *= (eps * rng.uniform(0.01, 1, 50) / np.linalg.norm(d, axis=1))[:, None]
    np.testing.assert_allclose(kernel(p, d, eps), d / eps ** (s + 1), rtol=1e-15)
    np.testing.assert_array_equal(kernel(p, np.zeros(3), eps), 0.0)
    assert 3 * eps > eps * p.support_radius_factor


def test_kernel_matches_formula_outside_unit_ball():
    s, rho, eps = 1.5, 0.05, 0.2
    p = build_profile(s, rho)
    for u in np.linspace(1.0001, p.support_radius_factor, 40) * eps:
        d = np.array([0.6, 0.8]) * u
        expected = float(eval_phi(p, u**2 / eps**2)) * d / u ** (s + 1)
        np.testing.assert_allclose(kernel(p, d, eps), expected, rtol=1e-13, atol=1e-300)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.floats(0.05, 1.0))
def test_kernel_is_odd(d, eps):
    p = build_profile(0.5, 0.05)
    d = np.asarray(d)
    np.testing.assert_array_equal(kernel(p, -d, eps), -kernel(p, d, eps))


@pytest.mark.parametrize("s", [0.5, 1.5, 6.0])
def test_kernel_sup_scaling(s):
    p = build_profile(s, 0.05)
    sup1, grad1 = kernel_radial_sup(p, 1e-2)
    sup2, grad2 = kernel_radial_sup(p, 2e-2)
    assert sup2 / sup1 == pytest.approx(2.0**-s, rel=0.01)
    assert grad2 / grad1 == pytest.approx(2.0 ** -(s + 1), rel=0.01)


def test_gradient_bound_against_finite_differences():
    """Brute-force Jacobian norm at random points stays below the reported sup."""
    s, eps = 1.5, 0.1
    p = build_profile(s, 0.05)
    _, grad = kernel_radial_sup(p, eps)
    rng = np.random.default_rng(5)
    h = 1e-7
    worst = 0.0
    for _ in range(300):
        x = rng.normal(size=2)
        x *= eps * rng.uniform(0.05, p.support_radius_factor) / np.linalg.norm(x)
        J = np.column_stack([(kernel(p, x + h * e, eps) - kernel(p, x - h * e, eps)) / (2 * h)
                             for e in np.eye(2)])
        worst = max(worst, np.linalg.norm(J, 2))
    assert worst <= grad * 1.01
    assert worst >= 0.5 * grad
    assert math.isfinite(grad)
