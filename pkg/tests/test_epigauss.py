import math

import numpy as np
import pytest
from scipy import integrate, stats

from protmeas import epigauss as eg
from protmeas.hamgauss import (
    OscillatorConfig,
    PointerPrep,
    Protected,
    Semiprotected,
    VonNeumann,
    completion_map,
    ode_oracle,
    pointer_reading_distribution,
)


def test_sample_system_moments():
    rng = np.random.default_rng(0)
    n = 100_000
    c_q, c_p = 0.7, -1.3
    q, p = eg.sample_system(c_q, c_p, rng, n)
    tol = 3 * math.sqrt(0.5 / n)
    assert abs(q.mean() - c_q) < tol and abs(p.mean() - c_p) < tol
    assert q.var() == pytest.approx(0.5, rel=0.05)
    assert p.var() == pytest.approx(0.5, rel=0.05)
    assert abs(np.corrcoef(q, p)[0, 1]) < 0.02


def test_sample_system_scalar():
    q, p = eg.sample_system(0.0, 0.0, np.random.default_rng(1))
    assert isinstance(q, float) and isinstance(p, float)


def test_density():
    assert eg.system_density(0.4, -0.2, 0.4, -0.2) == pytest.approx(1 / math.pi, rel=1e-15)
    mass, _ = integrate.dblquad(lambda p, q: eg.system_density(0.4, -0.2, q, p), -8, 8, -8, 8)
    assert mass == pytest.approx(1.0, abs=1e-10)


# -- single-point flow --------------------------------------------------------------------


def test_protected_zero_momentum_reads_c_theta_exactly():
    for n in (1, 3, 10):
        osc = OscillatorConfig(0.8, -0.3, 0.6, 1 / (2 * math.pi * n))
        pt = eg.PhasePoint(1.1, 0.2, 0.35, 0.0)
        out = eg.evolve(pt, 0.0, osc, periods=n)
        assert out.Q == pt.Q + osc.c_theta
        assert out.P == 0.0


def test_full_period_restores_system():
    rng = np.random.default_rng(2)
    for _ in range(10):
        osc = OscillatorConfig(*rng.normal(size=3), rng.uniform(0.01, 3))
        pt = eg.PhasePoint(*rng.normal(size=4))
        out = eg.evolve(pt, 0.0, osc, periods=1)
        assert out.q_sys == pytest.approx(pt.q_sys, abs=1e-13)
        assert out.p_sys == pytest.approx(pt.p_sys, abs=1e-13)


@pytest.mark.parametrize("g", [0.05, 1 / (2 * math.pi), 5.0])
def test_evolve_matches_ode(g):
    osc = OscillatorConfig(0.5, 0.9, -0.4, g)
    pt = eg.PhasePoint(-0.2, 1.4, 0.3, -0.6)
    t = 1 / g
    oracle = ode_oracle(t, g, osc.c_theta, 1e-3 * min(1, 1 / g))
    expected = eg.apply_map(pt.as_array(), oracle, osc)
    assert np.max(np.abs(eg.evolve(pt, t, osc).as_array() - expected)) < 1e-8


def test_apply_map_batches():
    osc = OscillatorConfig(0.1, 0.2, 0.3, 0.4)
    pts = np.random.default_rng(3).normal(size=(5, 4))
    m = completion_map(osc.g, osc.c_theta)
    batch = eg.apply_map(pts, m, osc)
    for row, out in zip(pts, batch):
        np.testing.assert_allclose(eg.apply_map(row, m, osc), out, atol=1e-15)


def test_von_neumann_reads_c_theta_plus_q():
    g = 1e6
    osc = OscillatorConfig(0.3, -0.7, 1.2, g)
    pt = eg.PhasePoint(0.9, 0.4, 0.05, 0.3)
    q0, _ = osc.to_rotated(pt.q_sys, pt.p_sys)
    out = eg.evolve(pt, 1 / g, osc)
    assert out.Q == pytest.approx(pt.Q + q0 + osc.c_theta, abs=1e-5)


# -- trajectories ---------------------------------------------------------------------------


def test_trajectory_time_average_of_a_theta():
    n = 3
    osc = OscillatorConfig(0.6, 0.2, 0.9, 1 / (2 * math.pi * n))
    pt = eg.PhasePoint(1.5, -0.4, 0.0, 0.0)
    T = 2 * math.pi * n
    avg = integrate.quad(lambda t: eg.a_theta_at(osc, pt, t), 0, T, limit=200, epsabs=1e-13)[0] / T
    assert avg == pytest.approx(osc.c_theta, abs=1e-10)


def test_pointer_velocity_is_g_a_theta():
    osc = OscillatorConfig(0.6, 0.2, 0.9, 0.1)
    pt = eg.PhasePoint(1.5, -0.4, 0.2, 0.0)
    times = np.linspace(0, 1 / osc.g, 11)
    traj = eg.run_trajectory(osc, pt, times)
    for t, row in zip(times, traj.rotated):
        moved = osc.g * integrate.quad(lambda s: eg.a_theta_at(osc, pt, s), 0, t, epsabs=1e-13)[0]
        assert row[2] - pt.Q == pytest.approx(moved, abs=1e-10)


def test_momentum_kick_at_start():
    g, P = 0.2, 1.5
    osc = OscillatorConfig(0.4, -0.1, 0.3, g)
    # a point at the centre has q = p = 0 in the rotated frame, so only the coupling moves p
    pt = eg.PhasePoint(osc.c_q, osc.c_p, 0.0, P)
    h = 1e-6
    traj = eg.run_trajectory(osc, pt, [0.0, h])
    rate = (traj.rotated[1, 1] - traj.rotated[0, 1]) / h
    assert rate == pytest.approx(-g * P, rel=1e-5)


def test_trajectory_output():
    osc = OscillatorConfig(0.4, -0.1, 0.3, 0.5)
    pt = eg.PhasePoint(0.1, 0.2, 0.3, 0.4)
    times = np.linspace(0, 2, 7)
    traj = eg.run_trajectory(osc, pt, times)
    rows = traj.rows()
    assert len(rows) == 7 and all(len(r) == len(eg.TRAJECTORY_COLUMNS) for r in rows)
    assert eg.TRAJECTORY_COLUMNS == ("t", "q", "p", "Q", "P", "a_theta")
    np.testing.assert_allclose(traj.a_theta, eg.a_theta_at(osc, pt, times), atol=1e-14)
    (t0, p0), *_ = traj.points()
    assert t0 == 0.0 and p0.as_array() == pytest.approx(pt.as_array(), abs=1e-15)
    with pytest.raises(ValueError):
        eg.run_trajectory(osc, pt, [0.0, 3.0])
    with pytest.raises(ValueError):
        eg.run_trajectory(osc, pt, [1.0, 0.5])


# -- ensembles --------------------------------------------------------------------------------


def test_protected_ensemble_mean():
    sigma = 0.1
    cfg = eg.EnsembleConfig(0.7, -0.4, 0.5, 1e-4, PointerPrep.minimum_uncertainty(sigma**2), runs=10_000)
    st = eg.ensemble_statistics(cfg, Protected(), np.random.default_rng(4))
    assert st.predicted_mean == cfg.oscillator.c_theta
    assert abs(st.mean_final_Q - cfg.oscillator.c_theta) <= 3 * sigma / 100
    assert st.agrees(3)


def test_semiprotected_ensemble_sharp_reading():
    g = 1 / (2 * math.pi)
    cfg = eg.EnsembleConfig(0.7, -0.4, 0.5, g, PointerPrep.sheared(g, 1e-4, 2500.0), runs=10_000)
    st = eg.ensemble_statistics(cfg, Semiprotected(1), np.random.default_rng(5))
    assert st.var_final_Q == pytest.approx(1e-4, rel=0.05)
    assert st.agrees(3)


def test_unprotected_reading_samples_the_quadrature():
    g = 1e6
    osc_args = (0.7, -0.4, 0.5)
    cfg = eg.EnsembleConfig(*osc_args, g, PointerPrep.minimum_uncertainty(1e-2), runs=10_000)
    rng = np.random.default_rng(6)
    start = eg.sample_initial(cfg, rng)
    end = eg.apply_map(start, completion_map(g, cfg.oscillator.c_theta), cfg.oscillator)
    shift = end[:, 2] - start[:, 2]
    q, p = eg.sample_system(osc_args[0], osc_args[1], rng, 10_000)
    direct = q * math.cos(osc_args[2]) + p * math.sin(osc_args[2])
    assert stats.ks_2samp(shift, direct).pvalue > 0.01


@pytest.mark.parametrize(
    "regime, g, prep",
    [
        (Protected(), 1e-3, PointerPrep.minimum_uncertainty(0.01)),
        (Protected(), 2e-2, PointerPrep.minimum_uncertainty(0.5, mean=(1.0, -0.5))),
        (Semiprotected(2), 1 / (4 * math.pi), PointerPrep.sheared(1 / (4 * math.pi), 1e-3, 500.0)),
        (VonNeumann(), 50.0, PointerPrep.minimum_uncertainty(0.01)),
        (VonNeumann(), 1e6, PointerPrep(np.zeros(2), [[0.3, 0.1], [0.1, 1.0]])),
    ],
)
def test_ensemble_matches_moment_propagation(regime, g, prep):
    cfg = eg.EnsembleConfig(-0.3, 1.1, 2.0, g, prep, runs=20_000)
    st = eg.ensemble_statistics(cfg, regime, np.random.default_rng(7))
    mean, var = pointer_reading_distribution(cfg.oscillator, regime, prep)
    assert (st.predicted_mean, st.predicted_var) == (mean, var)
    assert st.agrees(3)
    assert st.histogram[0].sum() == cfg.runs
    summary = st.to_json()
    assert summary["runs"] == cfg.runs and len(summary["histogram"]["edges"]) == 51


def test_ensemble_rejects_small_runs():
    cfg = eg.EnsembleConfig(0, 0, 0, 0.1, PointerPrep.minimum_uncertainty(0.1), runs=50)
    with pytest.raises(ValueError):
        eg.ensemble_statistics(cfg, Protected(), np.random.default_rng(0))
    with pytest.raises(ValueError):
        eg.EnsembleConfig(0, 0, 0, 0.1, PointerPrep.minimum_uncertainty(0.1), runs=0)


def test_pointer_prep_uncertainty_enforced():
    with pytest.raises(ValueError):
        PointerPrep(np.zeros(2), np.diag([0.01, 1.0]))


# -- overlap and disturbance ------------------------------------------------------------------


def test_overlap_closed_form_and_monte_carlo():
    c1, c2 = (0.0, 0.0), (1.0, 0.0)
    exact = eg.overlap_closed_form(c1, c2)
    assert exact == pytest.approx(math.exp(-0.25), rel=1e-15)
    mc = eg.overlap_monte_carlo(c1, c2, np.random.default_rng(8))
    assert mc == pytest.approx(exact, rel=0.02)


def test_overlap_positive_against_quadrature():
    rng = np.random.default_rng(9)
    for _ in range(5):
        c1, c2 = tuple(rng.normal(size=2)), tuple(rng.normal(size=2))
        val, _ = integrate.dblquad(
            lambda p, q: math.sqrt(eg.system_density(*c1, q, p) * eg.system_density(*c2, q, p)), -10, 10, -10, 10
        )
        assert 0 < eg.overlap_closed_form(c1, c2) == pytest.approx(val, abs=1e-9)
        assert eg.overlap_monte_carlo(c1, c2, rng) == pytest.approx(val, rel=0.02)


def test_ontic_disturbance_leaves_distribution_unchanged():
    g = 1e-3
    cfg = eg.EnsembleConfig(0.5, -0.2, 0.7, g, PointerPrep.minimum_uncertainty(0.01, mean=(0.0, 2.0)), runs=10_000)
    dc = eg.ontic_disturbance_check(cfg, 1 / g, np.random.default_rng(10))
    assert dc.mean_displacement > 0.1
    assert dc.passed(0.01)


def test_full_period_distribution_unchanged():
    n = 5
    g = 1 / (2 * math.pi * n)
    cfg = eg.EnsembleConfig(0.5, -0.2, 0.7, g, PointerPrep.minimum_uncertainty(0.01, mean=(0.0, 2.0)), runs=10_000)
    rng = np.random.default_rng(11)
    start = eg.sample_initial(cfg, rng)
    osc = cfg.oscillator
    end = np.array([eg.evolve(eg.PhasePoint(*row), 0.0, osc, periods=n).as_array() for row in start[:2000]])
    end = np.vstack([end, eg.apply_map(start[2000:], eg.heisenberg_map(0.0, g, osc.c_theta, periods=n), osc)])
    fresh_q, fresh_p = eg.sample_system(cfg.c_q, cfg.c_p, rng, cfg.runs)
    assert stats.ks_2samp(end[:, 0], fresh_q).pvalue > 0.01
    assert stats.ks_2samp(end[:, 1], fresh_p).pvalue > 0.01
