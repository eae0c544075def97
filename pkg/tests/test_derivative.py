import numpy as np
import pytest
from hypothesis import given, strategies as st

from planarflow import fields, paths
from planarflow.derivative import (compute_V, derivative, derivative_field,
                                   finite_difference_check, finite_difference_derivative,
                                   identity_residual, theta_panels)
from planarflow.errors import ParameterError, UnsupportedFieldError
from planarflow.flow import flow_map

from oracles import power_flow_derivative


def test_zero_driver_derivative_matches_hand_formula():
    zp = paths.zero_path(0, 1, 10_000)
    F = fields.power(0.5)
    for z in (1.0, 1j, 0.5 + 0.5j, -1 + 0.1j):
        d = derivative(F, zp, 0, 1, z)
        ref = power_flow_derivative(0.5, 1.0, z)
        assert abs(d - ref) < 2e-3 * abs(ref)


def test_zero_driver_uncompensated_v_misses_the_derivative():
    # without quadratic-variation compensation V only sees the Ito correction,
    # which is absent for a driver with no quadratic variation
    zp = paths.zero_path(0, 1, 2000)
    F = fields.power(0.5)
    lit = derivative(F, zp, 0, 1, 1.0, compensate_qv=False)
    assert abs(lit - 1.0) < 2e-3
    assert abs(derivative(F, zp, 0, 1, 1.0) - 1.5) < 2e-3


def test_constant_field_has_unit_derivative():
    p = paths.sample_brownian(1, 0, 1, 1000)
    r = compute_V(fields.constant(0.5 + 2j), p, 0, 1, 1j, 1j)
    assert abs(r.V_val) < 1e-12
    assert abs(r.qv_correction) == 0
    assert abs(r.phi_prime - 1) < 1e-12


def test_identity_residual_small_and_halving():
    F = fields.power(0.5)
    for z, w in ((-1, 1), (1j, 1 + 1j)):
        r = [identity_residual(F, paths.sample_brownian(7, 0, 1, n), 0, 1, z, w)
             for n in (10_000, 20_000)]
        assert r[0] < 1e-3
        assert 0.35 <= r[1] / r[0] <= 0.65


def test_identity_for_herglotz_field():
    F = fields.herglotz(0.2, 0.3, [(-0.5, 0.5), (1.5, 0.2)])
    p = paths.sample_brownian(4, 0, 1, 10_000)
    assert identity_residual(F, p, 0, 1, 1j, 0.5 + 2j) < 1e-3


def test_identity_needs_distinct_points():
    with pytest.raises(ParameterError):
        identity_residual(fields.power(0.5), paths.zero_path(0, 1, 10), 0, 1, 1j, 1j)


def test_derivative_matches_finite_difference_on_brownian_path():
    F = fields.power(0.5)
    p = paths.sample_brownian(7, 0, 1, 10_000)
    for z in (-1, 1, 1j, 1 + 1j):
        d = derivative(F, p, 0, 1, z)
        assert finite_difference_check(F, p, 0, 1, z, 1e-6) <= 1e-2 * abs(d)


def test_derivative_field_matches_pointwise():
    F = fields.power(0.5)
    p = paths.sample_brownian(2, 0, 1, 2000)
    xs = np.array([-1.0, -0.3, 0.4, 1.2])
    df = derivative_field(F, p, 0, 1, xs)
    for x, d in zip(xs, df):
        assert abs(d - derivative(F, p, 0, 1, x)) < 1e-10 * abs(d)


def test_derivative_at_equal_times_is_one():
    r = compute_V(fields.power(0.5), paths.zero_path(0, 1, 10), 0.5, 0.5, 1j, 1j)
    assert r.phi_prime == 1 and r.V_val == 0


def test_iterated_field_is_unsupported_but_finite_difference_works():
    p = paths.sample_brownian(3, 0, 1, 100)
    It = fields.iterate_field(fields.power(0.5), p, 1)
    with pytest.raises(UnsupportedFieldError):
        derivative(It, p, 0, 1, 1j)
    fd = finite_difference_derivative(It, p, 0, 1, 1j, 1e-5)
    assert np.isfinite(fd)


def test_mollified_fields_approach_the_boundary_value():
    # V for F(. + i y) converges to V for F as y -> 0
    F = fields.power(0.5)
    p = paths.sample_brownian(5, 0, 1, 4000)
    v0 = compute_V(F, p, 0, 1, 1j, 1 + 1j).V_val
    gaps = [abs(compute_V(fields.shift_field(F, y), p, 0, 1, 1j, 1 + 1j).V_val - v0)
            for y in (1e-1, 1e-2, 1e-3)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 5e-3


@given(st.builds(complex, st.floats(-2, 2), st.floats(0, 2)),
       st.builds(complex, st.floats(-2, 2), st.floats(0, 2)))
def test_theta_panels_are_a_quadrature_on_the_unit_interval(x, y):
    F = fields.power(0.5)
    th, wt = theta_panels(F, np.array([x]), np.array([y]), 8)
    assert wt.sum() == pytest.approx(1.0)
    assert np.all((th >= 0) & (th <= 1))
    # exact for cubics on each panel
    assert np.sum(wt * th ** 3) == pytest.approx(0.25)


def test_identity_on_zero_path_matches_closed_form_difference():
    zp = paths.zero_path(0, 1, 10_000)
    r = compute_V(fields.power(0.5), zp, 0, 1, 1j, 2j)
    assert abs(r.phi_z - r.phi_w - (1j - 2j) * np.exp(r.V_val)) < 1e-3
    v = flow_map(fields.power(0.5), zp, 0, 1, np.array([1j, 2j]))
    assert r.phi_z == v[0] and r.phi_w == v[1]


def test_report_serializes():
    r = compute_V(fields.power(0.5), paths.zero_path(0, 1, 10), 0, 1, 1j, 1 + 1j)
    d = r.as_dict()
    assert d["phi_prime"] is None and len(d["V"]) == 2
