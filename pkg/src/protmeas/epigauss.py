"""Classical phase-space model of the Gaussian protected measurement.

Coherent states become Gaussian densities
``P(q', p') = exp(-(q'-c_q)^2 - (p'-c_p)^2) / pi`` and every ontic point
``(q', p', Q, P)`` follows Hamilton's equations, which share the affine flow
of :mod:`protmeas.hamgauss`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .hamgauss import (
    AffinePhaseMap,
    OscillatorConfig,
    PointerPrep,
    RegimeCase,
    heisenberg_map,
    pointer_reading_distribution,
    regime_map,
)


@dataclass(frozen=True)
class PhasePoint:
    """Ontic point; ``q_sys``, ``p_sys`` are in the primed (lab) frame."""

    q_sys: float
    p_sys: float
    Q: float
    P: float

    def as_array(self) -> np.ndarray:
        return np.array([self.q_sys, self.p_sys, self.Q, self.P])


@dataclass(frozen=True, eq=False)
class EnsembleConfig:
    c_q: float
    c_p: float
    theta: float
    g: float
    pointer_prep: PointerPrep
    runs: int = 10_000

    def __post_init__(self):
        if int(self.runs) != self.runs or self.runs < 1:
            raise ValueError("runs must be a positive integer")

    @property
    def oscillator(self) -> OscillatorConfig:
        return OscillatorConfig(self.c_q, self.c_p, self.theta, self.g)


def system_density(c_q: float, c_p: float, q_prime, p_prime):
    return np.exp(-((np.asarray(q_prime) - c_q) ** 2) - (np.asarray(p_prime) - c_p) ** 2) / np.pi


def sample_system(c_q: float, c_p: float, rng: np.random.Generator, size: int | None = None):
    """Draw ``(q', p')`` from the coherent-state density: independent normals of variance 1/2."""
    scale = np.sqrt(0.5)
    q = rng.normal(c_q, scale, size)
    p = rng.normal(c_p, scale, size)
    return (float(q), float(p)) if size is None else (q, p)


def sample_pointer(prep: PointerPrep, rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.multivariate_normal(prep.mean, prep.cov, size=size, method="eigh")


# --------------------------------------------------------------------------
# evolution in the lab frame


def _to_rotated(points: np.ndarray, osc: OscillatorConfig) -> np.ndarray:
    out = np.array(points, dtype=float, copy=True)
    out[..., 0], out[..., 1] = osc.to_rotated(points[..., 0], points[..., 1])
    return out


def _to_primed(points: np.ndarray, osc: OscillatorConfig) -> np.ndarray:
    out = np.array(points, dtype=float, copy=True)
    out[..., 0], out[..., 1] = osc.to_primed(points[..., 0], points[..., 1])
    return out


def apply_map(points, phase_map: AffinePhaseMap, osc: OscillatorConfig) -> np.ndarray:
    """Apply a rotated-frame map to lab-frame points of shape (4,) or (n, 4)."""
    pts = np.asarray(points, dtype=float)
    return _to_primed(phase_map(_to_rotated(pts, osc)), osc)


def evolve(point: PhasePoint, t: float, osc: OscillatorConfig, periods: int | None = None) -> PhasePoint:
    """Exact flow for time ``t`` (or exactly ``2 pi periods``)."""
    m = heisenberg_map(t, osc.g, osc.c_theta, periods=periods)
    return PhasePoint(*apply_map(point.as_array(), m, osc))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled flow. ``lab`` holds (q', p', Q, P); ``rotated`` holds (q, p, Q, P)."""

    times: np.ndarray
    lab: np.ndarray
    rotated: np.ndarray
    a_theta: np.ndarray

    def points(self) -> list[tuple[float, PhasePoint]]:
        return [(float(t), PhasePoint(*row)) for t, row in zip(self.times, self.lab)]

    def rows(self) -> list[list[float]]:
        """CSV rows ``t, q, p, Q, P, a_theta`` in the rotated frame."""
        return np.column_stack([self.times, self.rotated, self.a_theta]).tolist()


TRAJECTORY_COLUMNS = ("t", "q", "p", "Q", "P", "a_theta")


def run_trajectory(osc: OscillatorConfig, point: PhasePoint, sample_times) -> Trajectory:
    """Exact trajectory of one ontic point at the given times in ``[0, 1/g]``.

    ``a_theta(t) = c_theta + q(t)`` is the quadrature being measured.
    """
    times = np.asarray(sample_times, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) < 0):
        raise ValueError("sample times must be a sorted 1-d sequence")
    if times.size and (times[0] < 0 or times[-1] > 1 / osc.g * (1 + 1e-12)):
        raise ValueError("sample times must lie in [0, 1/g]")
    x0 = _to_rotated(point.as_array(), osc)
    rotated = np.array([heisenberg_map(t, osc.g, osc.c_theta)(x0) for t in times]).reshape(-1, 4)
    lab = _to_primed(rotated, osc)
    return Trajectory(times, lab, rotated, osc.c_theta + rotated[:, 0])


def a_theta_at(osc: OscillatorConfig, point: PhasePoint, t):
    """``c_theta + q(t)`` evaluated directly from the closed form (vectorized in ``t``)."""
    q0, p0, _, P0 = _to_rotated(point.as_array(), osc)
    t = np.asarray(t, dtype=float)
    return osc.c_theta + q0 * np.cos(t) + p0 * np.sin(t) + osc.g * (np.cos(t) - 1) * P0


# --------------------------------------------------------------------------
# ensembles


@dataclass(frozen=True, eq=False)
class EnsembleStatistics:
    mean_final_Q: float
    var_final_Q: float
    histogram: tuple[np.ndarray, np.ndarray]
    predicted_mean: float
    predicted_var: float
    runs: int

    @property
    def mean_standard_error(self) -> float:
        return float(np.sqrt(self.predicted_var / self.runs))

    @property
    def var_standard_error(self) -> float:
        return float(self.predicted_var * np.sqrt(2.0 / (self.runs - 1)))

    def agrees(self, n_se: float = 3.0) -> bool:
        return (
            abs(self.mean_final_Q - self.predicted_mean) <= n_se * self.mean_standard_error
            and abs(self.var_final_Q - self.predicted_var) <= n_se * self.var_standard_error
        )

    def to_json(self) -> dict:
        counts, edges = self.histogram
        return {
            "runs": self.runs,
            "mean_final_Q": self.mean_final_Q,
            "var_final_Q": self.var_final_Q,
            "predicted_mean": self.predicted_mean,
            "predicted_var": self.predicted_var,
            "histogram": {"counts": counts.tolist(), "edges": edges.tolist()},
        }


def sample_initial(config: EnsembleConfig, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Lab-frame ontic points ``(q', p', Q, P)``, shape ``(size, 4)``."""
    n = config.runs if size is None else size
    q, p = sample_system(config.c_q, config.c_p, rng, n)
    ptr = sample_pointer(config.pointer_prep, rng, n)
    return np.column_stack([q, p, ptr])


def ensemble_statistics(
    config: EnsembleConfig,
    regime: RegimeCase,
    rng: np.random.Generator,
    bins: int = 50,
) -> EnsembleStatistics:
    """Monte Carlo over system and pointer preparations, next to the moment prediction.

    The flow is :func:`hamgauss.regime_map`, the same one the quantum moment
    propagation uses.
    """
    if config.runs < 100:
        raise ValueError("ensemble statistics need at least 100 runs")
    osc = config.oscillator
    final = apply_map(sample_initial(config, rng), regime_map(regime, osc.g, osc.c_theta), osc)
    q_final = final[:, 2]
    mean, var = pointer_reading_distribution(osc, regime, config.pointer_prep)
    return EnsembleStatistics(
        float(q_final.mean()),
        float(q_final.var(ddof=1)),
        np.histogram(q_final, bins=bins),
        mean,
        var,
        config.runs,
    )


def overlap_closed_form(c1: tuple[float, float], c2: tuple[float, float]) -> float:
    """``int sqrt(P_1 P_2) = exp(-|c1 - c2|^2 / 4)`` for two coherent-state densities."""
    d2 = (c1[0] - c2[0]) ** 2 + (c1[1] - c2[1]) ** 2
    return float(np.exp(-d2 / 4))


def overlap_monte_carlo(c1, c2, rng: np.random.Generator, samples: int = 100_000) -> float:
    """Estimate ``int sqrt(P_1 P_2)`` as ``E_{P_1}[sqrt(P_2 / P_1)]``."""
    q, p = sample_system(c1[0], c1[1], rng, samples)
    ratio = system_density(c2[0], c2[1], q, p) / system_density(c1[0], c1[1], q, p)
    return float(np.mean(np.sqrt(ratio)))


@dataclass(frozen=True)
class DisturbanceCheck:
    mean_displacement: float
    ks_pvalue_q: float
    ks_pvalue_p: float

    def passed(self, alpha: float = 0.01) -> bool:
        return self.mean_displacement > 0 and min(self.ks_pvalue_q, self.ks_pvalue_p) > alpha


def ontic_disturbance_check(config: EnsembleConfig, t: float, rng: np.random.Generator) -> DisturbanceCheck:
    """Compare each system point after time ``t`` with where it started.

    Returns the mean Euclidean displacement of ``(q', p')`` and two-sample
    Kolmogorov-Smirnov p-values of the evolved marginals against an
    independent fresh sample from the preparation.
    """
    osc = config.oscillator
    start = sample_initial(config, rng)
    end = apply_map(start, heisenberg_map(t, osc.g, osc.c_theta), osc)
    fresh_q, fresh_p = sample_system(config.c_q, config.c_p, rng, config.runs)
    disp = np.hypot(end[:, 0] - start[:, 0], end[:, 1] - start[:, 1])
    return DisturbanceCheck(
        float(disp.mean()),
        float(stats.ks_2samp(end[:, 0], fresh_q).pvalue),
        float(stats.ks_2samp(end[:, 1], fresh_p).pvalue),
    )
