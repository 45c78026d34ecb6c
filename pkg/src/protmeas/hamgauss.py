"""Heisenberg-picture solution of a Hamiltonian protected quadrature measurement.

The system is a displaced oscillator whose ground state is the coherent state
centred at ``(c_q, c_p)``. In the rotated, displaced frame
``q = (q'-c_q) cos(theta) + (p'-c_p) sin(theta)``,
``p = -(q'-c_q) sin(theta) + (p'-c_p) cos(theta)`` the total Hamiltonian is
``(p^2 + q^2)/2 + g (q + c_theta) P`` and every operator evolves by an affine
map on ``(q, p, Q, P)``. The map depends on ``(t, g, c_theta)`` only and never
on the state of the system.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

SYMPLECTIC_FORM = np.array(
    [[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]],
    dtype=float,
)
COORDS = ("q", "p", "Q", "P")


@dataclass(frozen=True)
class OscillatorConfig:
    c_q: float
    c_p: float
    theta: float
    g: float

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError("g must be positive")

    @property
    def c_theta(self) -> float:
        return self.c_q * np.cos(self.theta) + self.c_p * np.sin(self.theta)

    def to_rotated(self, q_prime, p_prime):
        """Primed system coordinates to the rotated, displaced frame."""
        c, s = np.cos(self.theta), np.sin(self.theta)
        dq, dp = np.asarray(q_prime) - self.c_q, np.asarray(p_prime) - self.c_p
        return dq * c + dp * s, -dq * s + dp * c

    def to_primed(self, q, p):
        c, s = np.cos(self.theta), np.sin(self.theta)
        q, p = np.asarray(q), np.asarray(p)
        return self.c_q + q * c - p * s, self.c_p + q * s + p * c


@dataclass(frozen=True, eq=False)
class AffinePhaseMap:
    """``x -> linear @ x + shift`` on coordinates ordered (q, p, Q, P)."""

    linear: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        lin = np.array(self.linear, dtype=float)
        sh = np.array(self.shift, dtype=float).reshape(-1)
        if lin.shape != (4, 4) or sh.shape != (4,):
            raise ValueError("affine phase map needs a 4x4 linear part and a 4-vector shift")
        lin.flags.writeable = False
        sh.flags.writeable = False
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "shift", sh)

    @classmethod
    def identity(cls) -> "AffinePhaseMap":
        return cls(np.eye(4), np.zeros(4))

    def __call__(self, x):
        """Apply to a point of shape (4,) or to an array of points of shape (n, 4)."""
        x = np.asarray(x, dtype=float)
        return x @ self.linear.T + self.shift

    def then(self, other: "AffinePhaseMap") -> "AffinePhaseMap":
        """Apply ``self`` first, then ``other``."""
        return AffinePhaseMap(other.linear @ self.linear, other.linear @ self.shift + other.shift)

    def symplectic_error(self) -> float:
        s = self.linear
        return float(np.max(np.abs(s.T @ SYMPLECTIC_FORM @ s - SYMPLECTIC_FORM)))

    def max_difference(self, other: "AffinePhaseMap") -> float:
        return float(
            max(np.max(np.abs(self.linear - other.linear)), np.max(np.abs(self.shift - other.shift)))
        )

    def propagate_moments(self, mean, cov) -> tuple[np.ndarray, np.ndarray]:
        mean = np.asarray(mean, dtype=float)
        cov = np.asarray(cov, dtype=float)
        return self.linear @ mean + self.shift, self.linear @ cov @ self.linear.T

    def to_json(self) -> dict:
        return {"coords": list(COORDS), "linear": self.linear.tolist(), "shift": self.shift.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "AffinePhaseMap":
        return cls(np.array(data["linear"]), np.array(data["shift"]))


# --------------------------------------------------------------------------
# regimes


@dataclass(frozen=True)
class VonNeumann:
    """Strong coupling, ``g -> infinity``."""


@dataclass(frozen=True)
class Semiprotected:
    """``g = 1/(2 pi n)``: finite duration, system exactly restored."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("Semiprotected needs a positive integer n")

    @property
    def g(self) -> float:
        return 1.0 / (2 * np.pi * self.n)


@dataclass(frozen=True)
class Protected:
    """Weak coupling, ``g -> 0``."""


RegimeCase = VonNeumann | Semiprotected | Protected


# --------------------------------------------------------------------------
# closed form


def _map_from_trig(t: float, cos_t: float, sin_t: float, g: float, c_theta: float, gt: float) -> AffinePhaseMap:
    lin = np.array(
        [
            [cos_t, sin_t, 0.0, g * (cos_t - 1)],
            [-sin_t, cos_t, 0.0, -g * sin_t],
            [g * sin_t, g * (1 - cos_t), 1.0, g * (g * sin_t - gt)],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    return AffinePhaseMap(lin, np.array([0.0, 0.0, c_theta * gt, 0.0]))


def heisenberg_map(t: float, g: float, c_theta: float, *, periods: int | None = None) -> AffinePhaseMap:
    """Closed-form evolution of ``(q, p, Q, P)`` from time 0 to ``t``.

    With ``periods=n`` the time is taken as exactly ``2 pi n`` and the
    trigonometric factors are substituted as exact 1 and 0; if in addition
    ``g = 1/(2 pi n)`` to rounding, ``g t`` is substituted as exactly 1.
    """
    if periods is not None:
        if int(periods) != periods or periods < 0:
            raise ValueError("periods must be a non-negative integer")
        t = 2 * np.pi * periods
        gt = g * t
        if abs(gt - 1.0) < 1e-12:
            gt = 1.0
        return _map_from_trig(t, 1.0, 0.0, g, c_theta, gt)
    if t < 0:
        raise ValueError("t must be non-negative")
    return _map_from_trig(t, np.cos(t), np.sin(t), g, c_theta, g * t)


def completion_map(g: float, c_theta: float) -> AffinePhaseMap:
    """The map at the end of the interaction, ``t = 1/g``."""
    if not g > 0:
        raise ValueError("g must be positive")
    return heisenberg_map(1.0 / g, g, c_theta)


def limit_map(regime: RegimeCase, c_theta: float) -> AffinePhaseMap:
    """The idealized end-of-measurement maps of the three regimes.

    For ``Protected`` only the pointer rows are meaningful; the system block
    is the free rotation, which has no limit and is returned as the identity.
    """
    lin = np.eye(4)
    shift = np.array([0.0, 0.0, c_theta, 0.0])
    if isinstance(regime, VonNeumann):
        lin[1, 3] = -1.0
        lin[2, 0] = 1.0
    elif isinstance(regime, Semiprotected):
        lin[2, 3] = -regime.g
    elif not isinstance(regime, Protected):
        raise TypeError(f"unknown regime {regime!r}")
    return AffinePhaseMap(lin, shift)


def protected_periods(g: float) -> int:
    """Number of full periods ``n`` with ``2 pi n`` nearest ``1/g``."""
    return max(1, int(round(1.0 / (2 * np.pi * g))))


def effective_coupling(regime: RegimeCase, g: float) -> float:
    """Coupling actually used by :func:`regime_map`."""
    if isinstance(regime, Semiprotected):
        return regime.g
    if isinstance(regime, Protected):
        return 1.0 / (2 * np.pi * protected_periods(g))
    return g


def regime_map(regime: RegimeCase, g: float, c_theta: float) -> AffinePhaseMap:
    """The map actually used to evaluate a regime at finite coupling.

    VonNeumann uses ``completion_map(g)``. Semiprotected uses its own
    ``g = 1/(2 pi n)`` at exactly ``n`` periods. Protected replaces the
    duration ``1/g`` by the nearest full-period time ``2 pi n``, i.e. runs at
    the effective coupling ``1/(2 pi n)``; ``sin(1/g)`` has no limit as
    ``g -> 0`` so this subsequence is the representative.
    """
    if isinstance(regime, VonNeumann):
        return completion_map(g, c_theta)
    if isinstance(regime, Semiprotected):
        return heisenberg_map(0.0, regime.g, c_theta, periods=regime.n)
    if isinstance(regime, Protected):
        n = protected_periods(g)
        return heisenberg_map(0.0, effective_coupling(regime, g), c_theta, periods=n)
    raise TypeError(f"unknown regime {regime!r}")


@dataclass(frozen=True, eq=False)
class LimitReport:
    """Finite-g map next to its idealized limit, with the largest residual coefficient."""

    regime: RegimeCase
    g: float
    g_effective: float
    t: float
    actual: AffinePhaseMap
    limit: AffinePhaseMap
    pointer_residual: float
    system_residual: float


def limit_report(regime: RegimeCase, g: float, c_theta: float) -> LimitReport:
    actual = regime_map(regime, g, c_theta)
    limit = limit_map(regime, c_theta)
    diff_lin = np.abs(actual.linear - limit.linear)
    diff_shift = np.abs(actual.shift - limit.shift)
    if isinstance(regime, VonNeumann):
        t = 1.0 / g
    elif isinstance(regime, Semiprotected):
        t = 2 * np.pi * regime.n
    else:
        t = 2 * np.pi * protected_periods(g)
    return LimitReport(
        regime,
        g,
        effective_coupling(regime, g),
        t,
        actual,
        limit,
        pointer_residual=float(max(diff_lin[2:].max(), diff_shift[2:].max())),
        system_residual=float(max(diff_lin[:2].max(), diff_shift[:2].max())),
    )


# --------------------------------------------------------------------------
# ODE oracle


def _rhs_matrix(g: float) -> tuple[np.ndarray, np.ndarray]:
    a = np.array(
        [[0, 1, 0, 0], [-1, 0, 0, -g], [g, 0, 0, 0], [0, 0, 0, 0]],
        dtype=float,
    )
    return a, np.array([0.0, 0.0, 1.0, 0.0])


def ode_oracle(
    t: float,
    g: float,
    c_theta: float,
    step: float,
    ramp: Callable[[float], float] | None = None,
) -> AffinePhaseMap:
    """Integrate ``d/dt (q,p,Q,P) = (p, -q - gP, g(q + c_theta), 0)`` with classical RK4.

    The four unit initial conditions give the linear part and a zero initial
    condition gives the shift. ``ramp(s)`` optionally scales ``g`` at time
    ``s`` for smooth switching profiles. The step is shortened so that it
    divides ``t`` exactly.
    """
    limit = 1e-3 * min(1.0, 1.0 / g) if g > 0 else 1e-3
    if step > limit * (1 + 1e-12):
        raise ValueError(f"step {step} exceeds 1e-3 * min(1, 1/g) = {limit}")
    if t < 0:
        raise ValueError("t must be non-negative")
    n = max(1, int(np.ceil(t / step - 1e-9)))
    h = t / n
    a0, b0 = _rhs_matrix(1.0)
    rot = np.array([[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]], dtype=float)
    coupling = a0 - rot

    def field(s, x):
        gs = g * (ramp(s) if ramp is not None else 1.0)
        a = rot + gs * coupling
        rhs = a @ x
        rhs[:, 4] += gs * c_theta * b0
        return rhs

    x = np.zeros((4, 5))
    x[:, :4] = np.eye(4)
    s = 0.0
    for _ in range(n):
        k1 = field(s, x)
        k2 = field(s + h / 2, x + h / 2 * k1)
        k3 = field(s + h / 2, x + h / 2 * k2)
        k4 = field(s + h, x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        s += h
    return AffinePhaseMap(x[:, :4], x[:, 4])


# --------------------------------------------------------------------------
# moments of the pointer reading


COHERENT_SYSTEM_COV = 0.5 * np.eye(2)


def check_uncertainty(cov, tol: float = 1e-12) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (2, 2) or not np.allclose(cov, cov.T):
        raise ValueError("pointer covariance must be a symmetric 2x2 matrix")
    # det = ab - c^2 cancels when the pointer is strongly sheared, so scale the slack by ab
    slack = tol * max(1.0, abs(cov[0, 0] * cov[1, 1]))
    if np.linalg.eigvalsh(cov).min() < -tol or np.linalg.det(cov) < 0.25 - slack:
        raise ValueError(f"pointer covariance violates the uncertainty bound: det = {float(np.linalg.det(cov)):.6g} < 1/4")
    return cov


@dataclass(frozen=True, eq=False)
class PointerPrep:
    """Gaussian pointer preparation: mean and covariance of ``(Q, P)``."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).reshape(2))
        object.__setattr__(self, "cov", check_uncertainty(self.cov))

    @classmethod
    def sheared(cls, g: float, var_u: float, var_P: float, mean=(0.0, 0.0)) -> "PointerPrep":
        """Pointer with ``u = Q - gP`` and ``P`` uncorrelated, of variances ``var_u`` and ``var_P``."""
        cov = np.array([[var_u + g * g * var_P, g * var_P], [g * var_P, var_P]])
        return cls(np.asarray(mean, dtype=float), cov)

    @classmethod
    def minimum_uncertainty(cls, var_Q: float, mean=(0.0, 0.0)) -> "PointerPrep":
        return cls(np.asarray(mean, dtype=float), np.diag([var_Q, 0.25 / var_Q]))


def joint_moments(pointer: PointerPrep, system_mean=(0.0, 0.0), system_cov=COHERENT_SYSTEM_COV):
    """Mean and covariance of ``(q, p, Q, P)`` at t = 0, system and pointer uncorrelated.

    The default system moments are those of the protected coherent state in
    the rotated frame.
    """
    mean = np.concatenate([np.asarray(system_mean, dtype=float), pointer.mean])
    cov = np.zeros((4, 4))
    cov[:2, :2] = system_cov
    cov[2:, 2:] = pointer.cov
    return mean, cov


def pointer_reading_distribution(
    config: OscillatorConfig,
    regime: RegimeCase,
    pointer_prep: PointerPrep,
    system_mean=(0.0, 0.0),
    system_cov=COHERENT_SYSTEM_COV,
) -> tuple[float, float]:
    """Mean and variance of the final pointer position ``Q``."""
    m = regime_map(regime, config.g, config.c_theta)
    mean, cov = m.propagate_moments(*joint_moments(pointer_prep, system_mean, system_cov))
    return float(mean[2]), float(cov[2, 2])


def coefficient_table(times, g: float, c_theta: float) -> tuple[list[str], list[list[float]]]:
    """Rows of ``t`` followed by the flattened map (each row's 4 coefficients and shift)."""
    header = ["t"] + [f"{row}_{col}" for row in COORDS for col in (*COORDS, "shift")]
    rows = []
    for t in times:
        m = heisenberg_map(float(t), g, c_theta)
        rows.append([float(t)] + np.column_stack([m.linear, m.shift]).reshape(-1).tolist())
    return header, rows

