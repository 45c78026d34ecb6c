import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from protmeas import hamgauss as hg

J = hg.SYMPLECTIC_FORM


def expm_map(t, g, c_theta):
    """Exact flow of the linear ODE from the 5x5 augmented generator."""
    m = np.zeros((5, 5))
    m[:4, :4] = [[0, 1, 0, 0], [-1, 0, 0, -g], [g, 0, 0, 0], [0, 0, 0, 0]]
    m[2, 4] = g * c_theta
    e = expm(t * m)
    return e[:4, :4], e[:4, 4]


def spelled_out(t, g, c, x0):
    """The solution written coordinate by coordinate."""
    q, p, Q, P = x0
    qt = q * math.cos(t) + p * math.sin(t)
    pt = p * math.cos(t) - q * math.sin(t)
    return np.array(
        [
            qt + g * (math.cos(t) - 1) * P,
            pt - g * math.sin(t) * P,
            Q + g * (c * t + p - pt) + g * g * (math.sin(t) - t) * P,
            P,
        ]
    )


# -- config --------------------------------------------------------------------


def test_oscillator_config():
    osc = hg.OscillatorConfig(1.0, 2.0, 0.4, 0.3)
    assert osc.c_theta == pytest.approx(math.cos(0.4) + 2 * math.sin(0.4), rel=1e-15)
    with pytest.raises(ValueError):
        hg.OscillatorConfig(0, 0, 0, 0.0)
    q, p = osc.to_rotated(1.3, -0.2)
    np.testing.assert_allclose(osc.to_primed(q, p), (1.3, -0.2), atol=1e-15)


def test_semiprotected_requires_positive_integer():
    assert hg.Semiprotected(3).g == pytest.approx(1 / (6 * math.pi))
    with pytest.raises(ValueError):
        hg.Semiprotected(0)


# -- closed form -----------------------------------------------------------------


def test_identity_at_zero():
    m = hg.heisenberg_map(0.0, 0.7, 1.2)
    np.testing.assert_array_equal(m.linear, np.eye(4))
    np.testing.assert_array_equal(m.shift, np.zeros(4))


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        hg.heisenberg_map(-1.0, 0.1, 0.0)


@pytest.mark.parametrize("t,g,c", [(0.3, 0.1, 1.0), (2.0, 1.5, -0.4), (17.0, 0.05, 2.2)])
def test_closed_form_matches_spelled_out_solution(t, g, c):
    m = hg.heisenberg_map(t, g, c)
    rng = np.random.default_rng(0)
    for _ in range(5):
        x0 = rng.standard_normal(4)
        np.testing.assert_allclose(m(x0), spelled_out(t, g, c, x0), atol=1e-12)


@pytest.mark.parametrize("t,g", [(1.0, 0.2), (7.5, 0.05), (0.2, 5.0), (2 * math.pi, 1 / (2 * math.pi))])
def test_closed_form_matches_matrix_exponential(t, g):
    lin, shift = expm_map(t, g, 0.9)
    m = hg.heisenberg_map(t, g, 0.9)
    np.testing.assert_allclose(m.linear, lin, atol=1e-11)
    np.testing.assert_allclose(m.shift, shift, atol=1e-11)


def test_full_period():
    g, c = 0.3, 0.8
    m = hg.heisenberg_map(0.0, g, c, periods=1)
    np.testing.assert_array_equal(m.linear[:2, :2], np.eye(2))
    assert m.shift[2] == pytest.approx(2 * math.pi * g * c)
    assert m.linear[2, 3] == pytest.approx(-2 * math.pi * g * g)
    generic = hg.heisenberg_map(2 * math.pi, g, c)
    assert m.max_difference(generic) < 1e-14


def test_case_two_at_single_period():
    g, c = 1 / (2 * math.pi), 0.65
    m = hg.completion_map(g, c)
    x0 = np.array([0.3, -0.1, 0.2, 0.5])
    out = m(x0)
    np.testing.assert_allclose(out[:2], x0[:2], atol=1e-14)
    assert out[2] == pytest.approx(x0[2] + c - g * x0[3], abs=1e-14)


@pytest.mark.parametrize("n", range(1, 11))
def test_semiprotected_exact(n):
    c = 1.234
    m = hg.regime_map(hg.Semiprotected(n), 0.0, c)
    assert np.array_equal(m.linear[:2], np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]]))
    assert np.array_equal(m.shift[:2], np.zeros(2))
    assert m.shift[2] == c
    assert m.linear[2, 3] == -hg.Semiprotected(n).g
    # the floating-point evaluation at t = 1/g agrees closely but not bitwise
    assert m.max_difference(hg.completion_map(hg.Semiprotected(n).g, c)) < 1e-12


def test_von_neumann_limit():
    rep = hg.limit_report(hg.VonNeumann(), 1e6, 0.7)
    assert rep.pointer_residual < 1e-4
    assert rep.system_residual < 1e-4
    m = rep.actual
    x0 = np.array([0.3, -0.2, 0.1, 0.4])
    out = m(x0)
    assert out[2] == pytest.approx(x0[2] + x0[0] + 0.7, abs=1e-4)
    assert out[1] == pytest.approx(x0[1] - x0[3], abs=1e-4)


def test_protected_limit_residual_is_order_g():
    res = []
    for g in (1e-2, 1e-3, 1e-4):
        rep = hg.limit_report(hg.Protected(), g, 0.7)
        assert rep.t == pytest.approx(1 / rep.g_effective)
        assert abs(rep.t - 1 / g) <= math.pi
        res.append(rep.pointer_residual)
    assert res[2] < 2e-4
    assert res[0] / res[2] == pytest.approx(100, rel=0.2)


def test_protected_subsequence():
    assert hg.protected_periods(1e-4) == round(1e4 / (2 * math.pi))
    assert hg.protected_periods(10.0) == 1


# -- invariants ----------------------------------------------------------------------


@settings(max_examples=100, deadline=None)
@given(t=st.floats(0, 200), g=st.floats(1e-4, 1e3), c=st.floats(-5, 5))
def test_symplectic(t, g, c):
    assert hg.heisenberg_map(t, g, c).symplectic_error() < 1e-10 * max(1.0, g * g * t) ** 2


@settings(max_examples=100, deadline=None)
@given(t1=st.floats(0, 20), t2=st.floats(0, 20), g=st.floats(1e-3, 10), c=st.floats(-3, 3))
def test_composition(t1, t2, g, c):
    a = hg.heisenberg_map(t1, g, c)
    b = hg.heisenberg_map(t2, g, c)
    whole = hg.heisenberg_map(t1 + t2, g, c)
    scale = max(1.0, g * g * (t1 + t2), g * abs(c) * (t1 + t2))
    assert whole.max_difference(a.then(b)) < 1e-10 * scale


def test_symplectic_error_detects_violation():
    m = hg.AffinePhaseMap(np.diag([2.0, 1.0, 1.0, 1.0]), np.zeros(4))
    assert m.symplectic_error() > 0.5


def test_map_depends_only_on_time_coupling_and_c_theta():
    import inspect

    assert list(inspect.signature(hg.heisenberg_map).parameters) == ["t", "g", "c_theta", "periods"]
    # the same c_theta from different (c_q, c_p, theta) gives the same map
    a = hg.OscillatorConfig(1.0, 0.0, 0.0, 0.1)
    b = hg.OscillatorConfig(0.0, 1.0, math.pi / 2, 0.1)
    assert hg.completion_map(0.1, a.c_theta).max_difference(hg.completion_map(0.1, b.c_theta)) < 1e-15


# -- ODE oracle ------------------------------------------------------------------------


@pytest.mark.parametrize("g", [0.05, 1 / (2 * math.pi), 5.0])
def test_ode_oracle_agrees_at_completion(g):
    c = 0.9
    step = 1e-3 * min(1.0, 1 / g)
    assert hg.ode_oracle(1 / g, g, c, step).max_difference(hg.completion_map(g, c)) < 1e-8


def test_ode_free_oscillator():
    m = hg.ode_oracle(1.3, 0.0, 0.5, 1e-3)
    c, s = math.cos(1.3), math.sin(1.3)
    expected = np.eye(4)
    expected[:2, :2] = [[c, s], [-s, c]]
    np.testing.assert_allclose(m.linear, expected, atol=1e-12)
    np.testing.assert_allclose(m.shift, 0, atol=1e-15)
    quarter = hg.ode_oracle(math.pi / 2, 0.0, 0.0, 1e-3)
    np.testing.assert_allclose(quarter(np.array([1.0, 0, 0, 0]))[:2], [0, -1], atol=1e-12)
    np.testing.assert_allclose(quarter(np.array([0, 1.0, 0, 0]))[:2], [1, 0], atol=1e-12)


def test_ode_step_limit():
    with pytest.raises(ValueError):
        hg.ode_oracle(1.0, 10.0, 0.0, 1e-3)
    hg.ode_oracle(1.0, 10.0, 0.0, 1e-4)


def test_ode_smooth_ramp_still_reads_c_theta():
    # sin^2 switching averages to the constant coupling g over [0, T]
    T, g, c = 20 * math.pi, 0.02, 0.8
    m = hg.ode_oracle(T, g, c, 1e-3, ramp=lambda s: 2 * math.sin(math.pi * s / T) ** 2)
    assert m.shift[2] == pytest.approx(c * g * T, rel=1e-8)
    # smooth switching leaves the system untouched by the pointer momentum
    assert np.max(np.abs(m.linear[:2, 3])) < 1e-8
    abrupt = hg.heisenberg_map(T + 1.0, g, c)
    assert np.max(np.abs(abrupt.linear[:2, 3])) > 1e-3


# -- moments ------------------------------------------------------------------------


def test_uncertainty_bound():
    with pytest.raises(ValueError):
        hg.PointerPrep([0, 0], np.diag([0.1, 0.1]))
    hg.PointerPrep([0, 0], np.diag([0.5, 0.5]))


def test_protected_reading():
    osc = hg.OscillatorConfig(1.0, 0.5, 0.3, 1e-4)
    mean, var = hg.pointer_reading_distribution(osc, hg.Protected(), hg.PointerPrep.minimum_uncertainty(0.01))
    assert mean == osc.c_theta
    assert var == pytest.approx(0.01, rel=1e-3)


def test_semiprotected_reading():
    osc = hg.OscillatorConfig(1.0, 0.5, 0.3, 1.0)
    reg = hg.Semiprotected(1)
    prep = hg.PointerPrep.sheared(reg.g, 1e-4, 2500.0)
    mean, var = hg.pointer_reading_distribution(osc, reg, prep)
    assert mean == pytest.approx(osc.c_theta, abs=1e-15)
    assert var == pytest.approx(1e-4, rel=1e-9)


def test_von_neumann_reading_includes_system_spread():
    osc = hg.OscillatorConfig(1.0, 0.5, 0.3, 1e6)
    prep = hg.PointerPrep.minimum_uncertainty(0.01)
    mean, var = hg.pointer_reading_distribution(osc, hg.VonNeumann(), prep)
    assert mean == pytest.approx(osc.c_theta, abs=1e-9)
    assert var == pytest.approx(0.5 + 0.01, rel=1e-4)


def test_moments_match_sampling():
    rng = np.random.default_rng(3)
    m = hg.heisenberg_map(3.0, 0.4, 0.6)
    mean, cov = hg.joint_moments(hg.PointerPrep([0.1, -0.2], np.diag([0.3, 1.0])))
    x = rng.multivariate_normal(mean, cov, size=200_000)
    y = m(x)
    pm, pc = m.propagate_moments(mean, cov)
    np.testing.assert_allclose(y.mean(axis=0), pm, atol=0.01)
    np.testing.assert_allclose(np.cov(y.T), pc, atol=0.02)


# -- serialization ----------------------------------------------------------------------


def test_json_round_trip():
    m = hg.heisenberg_map(1.7, 0.3, -0.2)
    assert hg.AffinePhaseMap.from_json(m.to_json()).max_difference(m) == 0.0


def test_coefficient_table():
    header, rows = hg.coefficient_table([0.0, 1.0], 0.2, 0.5)
    assert header[0] == "t" and len(header) == 21
    assert rows[0][1:] == np.column_stack([np.eye(4), np.zeros(4)]).reshape(-1).tolist()
