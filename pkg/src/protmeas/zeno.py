"""Zeno protected measurement of a two-outcome observable.

Alice couples ``A`` to the momentum of a Gaussian pointer for a total time
``1/g``, while Bob measures the system in ``basis`` at ``N + 1`` evenly spaced
times and aborts if any two outcomes differ. The whole procedure is a POVM
whose elements are diagonal in Bob's basis::

    E_Q = sum_j f_{N, r_j}(Q)**2 |psi_j><psi_j|,    r_j = <psi_j|P_plus|psi_j>

plus an abort element ``I - int E_Q dQ``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import quad_vec
from scipy.stats import binom

from .qcore import (
    DensityOperator,
    Observable,
    OrthonormalBasis,
    QuantumValueError,
    check_same_dim,
    matrix_to_json,
    spectral_split,
)

QUAD_TOL = 1e-9
MIXTURE_MAX_N = 64
ORACLE_MAX_N = 64
_LOG_CUTOFF = 50.0


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True, eq=False)
class ZenoConfig:
    """Parameters of one protected measurement.

    The time step ``dt = 1/(g N)`` is derived, never stored.
    """

    N: int
    g: float
    sigma: float
    basis: OrthonormalBasis
    observable: Observable

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        if not self.g > 0:
            raise ValueError("g must be positive")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        check_same_dim(self.basis.dim, self.observable.dim)
        if not self.observable.two_outcome:
            object.__setattr__(self, "observable", Observable(self.observable.matrix, two_outcome=True))
        object.__setattr__(self, "N", int(self.N))

    @property
    def dt(self) -> float:
        return 1.0 / (self.g * self.N)

    @property
    def dim(self) -> int:
        return self.basis.dim

    @cached_property
    def overlaps(self) -> np.ndarray:
        """``r_j = <psi_j|P_plus|psi_j>`` for each basis vector."""
        return overlap_vector(self.basis, self.observable)


def overlap_vector(basis: OrthonormalBasis, observable: Observable) -> np.ndarray:
    p_plus, _ = spectral_split(observable)
    u = basis.vectors
    r = np.einsum("aj,ab,bj->j", u.conj(), p_plus, u).real
    return np.clip(r, 0.0, 1.0)


# --------------------------------------------------------------------------
# pointer amplitudes


def pointer_wavefunction(sigma: float, Q):
    """Initial pointer amplitude ``(pi sigma^2)^(-1/4) exp(-Q^2 / 2 sigma^2)``."""
    Q = np.asarray(Q, dtype=float)
    return (np.pi * sigma**2) ** -0.25 * np.exp(-(Q**2) / (2 * sigma**2))


def shift_lattice(N: int) -> np.ndarray:
    """Pointer displacements ``(2n - N)/N`` for ``n = 0..N``."""
    n = np.arange(N + 1)
    return (2 * n - N) / N


def binomial_terms(N: int, r: float) -> tuple[np.ndarray, np.ndarray]:
    """Shifts and binomial weights, dropping terms below ``e^-50`` of the largest.

    Weights come from the log pmf so that ``N`` in the hundreds of thousands
    does not overflow.
    """
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"r must lie in [0, 1], got {r!r}")
    n = np.arange(N + 1)
    with np.errstate(divide="ignore"):
        logw = binom.logpmf(n, N, r)
    keep = logw > logw.max() - _LOG_CUTOFF
    return (2 * n[keep] - N) / N, np.exp(logw[keep])


def f_exact(N: int, r: float, sigma: float, Q):
    """``f_{N,r}(Q) = sum_n C(N,n) r^n (1-r)^(N-n) Phi(Q - (2n-N)/N)``."""
    Q = np.asarray(Q, dtype=float)
    shifts, w = binomial_terms(N, r)
    flat = Q.reshape(-1)
    out = np.empty_like(flat)
    chunk = max(1, 2_000_000 // shifts.size)
    for start in range(0, flat.size, chunk):
        q = flat[start : start + chunk]
        out[start : start + chunk] = pointer_wavefunction(sigma, q[:, None] - shifts[None, :]) @ w
    return out.reshape(Q.shape)


def gamma(N: int, r: float, sigma: float) -> float:
    """Width of the Gaussian approximation, ``sqrt(4 r (1-r) / N + sigma^2)``."""
    return float(np.sqrt(4 * r * (1 - r) / N + sigma**2))


def f_gauss(N: int, r: float, sigma: float, Q):
    """Normal approximation of ``f_exact``, a Gaussian of width ``gamma`` at ``2r - 1``.

    At ``r`` in {0, 1} this reduces to the shifted pointer ``Phi(Q -+ 1)``.
    """
    gam = gamma(N, r, sigma)
    Q = np.asarray(Q, dtype=float)
    return np.sqrt(sigma) / (np.pi**0.25 * gam) * np.exp(-((Q - (2 * r - 1)) ** 2) / (2 * gam**2))


def gaussian_approx_error(N: int, r: float, sigma: float, Q) -> float:
    """Sup-norm of ``f_exact - f_gauss`` over the grid ``Q``."""
    return float(np.max(np.abs(f_exact(N, r, sigma, Q) - f_gauss(N, r, sigma, Q))))


def success_overlap(N: int, r: float, sigma: float) -> float:
    """Closed form of ``int f_{N,r}^2 dQ`` from pairwise Gaussian overlaps.

    Uses ``int Phi(Q-a) Phi(Q-b) dQ = exp(-(a-b)^2 / 4 sigma^2)``. Cost is
    quadratic in the number of retained binomial terms.
    """
    a, w = binomial_terms(N, r)
    diff = a[:, None] - a[None, :]
    return float(w @ np.exp(-(diff**2) / (4 * sigma**2)) @ w)


# --------------------------------------------------------------------------
# POVM


@dataclass(frozen=True, eq=False)
class POVMDensity:
    """Outcome density ``Q -> E_Q`` and the abort element, both diagonal in ``basis``."""

    basis: OrthonormalBasis
    N: int
    sigma: float
    overlaps: np.ndarray
    abort_weights: np.ndarray
    quad_error: float = 0.0

    def diagonal(self, Q):
        """``f_{N,r_j}(Q)^2`` with shape ``Q.shape + (d,)``."""
        Q = np.asarray(Q, dtype=float)
        return np.stack([f_exact(self.N, r, self.sigma, Q) ** 2 for r in self.overlaps], axis=-1)

    def element_in_basis(self, Q: float) -> np.ndarray:
        return np.diag(self.diagonal(Q)).astype(complex)

    def element(self, Q: float) -> np.ndarray:
        u = self.basis.vectors
        return (u * self.diagonal(Q)) @ u.conj().T

    def kraus(self, Q: float) -> np.ndarray:
        u = self.basis.vectors
        f = np.array([f_exact(self.N, r, self.sigma, Q) for r in self.overlaps])
        return (u * f) @ u.conj().T

    @property
    def abort(self) -> np.ndarray:
        u = self.basis.vectors
        return (u * self.abort_weights) @ u.conj().T

    def integrated(self) -> np.ndarray:
        """``int E_Q dQ`` as implied by the stored abort weights."""
        u = self.basis.vectors
        return (u * (1 - self.abort_weights)) @ u.conj().T

    def to_json(self, Q_values=()) -> dict:
        return {
            "N": self.N,
            "sigma": self.sigma,
            "overlaps": self.overlaps.tolist(),
            "basis": matrix_to_json(self.basis.vectors),
            "abort": matrix_to_json(self.abort),
            "elements": [{"Q": float(q), "E_Q": matrix_to_json(self.element(q))} for q in Q_values],
        }


def _integration_window(sigma: float) -> tuple[float, float]:
    return -1 - 8 * sigma, 1 + 8 * sigma


def _breakpoints(N: int, overlaps: np.ndarray, sigma: float) -> list[float]:
    lo, hi = _integration_window(sigma)
    if N <= 256:
        pts = shift_lattice(N)
    else:
        pts = 2 * np.asarray(overlaps) - 1
    return sorted({float(p) for p in pts if lo < p < hi})


def integrate_over_outcomes(func, N: int, overlaps, sigma: float, tol: float = QUAD_TOL):
    """Adaptive Gauss-Kronrod integral of ``func(Q)`` over the outcome window."""
    lo, hi = _integration_window(sigma)
    res, err, info = quad_vec(
        func,
        lo,
        hi,
        epsabs=tol,
        epsrel=1e-12,
        points=_breakpoints(N, overlaps, sigma) or None,
        limit=20000,
        full_output=True,
    )
    if not info.success or err > tol:
        raise QuadratureError(f"quadrature did not converge: error estimate {err:.3e} > {tol:.1e}")
    return res, err


def povm_density(config: ZenoConfig, tol: float = QUAD_TOL) -> POVMDensity:
    r = config.overlaps
    exact = np.isclose(r, 0.0, atol=1e-15) | np.isclose(r, 1.0, atol=1e-15)
    succ = np.ones_like(r)
    err = 0.0
    idx = np.flatnonzero(~exact)
    if idx.size:
        rs = r[idx]

        def integrand(q):
            return np.array([f_exact(config.N, ri, config.sigma, q) ** 2 for ri in rs])

        vals, err = integrate_over_outcomes(integrand, config.N, rs, config.sigma, tol)
        succ[idx] = vals
    # a single-term f is a shifted, normalized Phi: its square integrates to exactly 1
    abort = 1.0 - succ
    if abort.min() < -10 * tol:
        raise QuadratureError("integrated POVM exceeds the identity")
    abort = np.clip(abort, 0.0, None)
    return POVMDensity(config.basis, config.N, config.sigma, r, abort, float(err))


def _as_povm(obj) -> POVMDensity:
    return obj if isinstance(obj, POVMDensity) else povm_density(obj)


def populations(basis: OrthonormalBasis, rho: DensityOperator) -> np.ndarray:
    """Diagonal of ``rho`` in ``basis``."""
    check_same_dim(basis.dim, rho.dim)
    u = basis.vectors
    return np.einsum("aj,ab,bj->j", u.conj(), rho.matrix, u).real


def outcome_pdf(config, rho: DensityOperator, Q):
    """``tr(E_Q rho)``; ``config`` may be a :class:`ZenoConfig` or a :class:`POVMDensity`."""
    pops = populations(config.basis, rho)
    Q = np.asarray(Q, dtype=float)
    out = np.zeros_like(Q)
    for rj, pj in zip(config.overlaps, pops):
        if pj > 0:
            out = out + pj * f_exact(config.N, rj, config.sigma, Q) ** 2
    return out


def abort_probability(config, rho: DensityOperator) -> float:
    povm = _as_povm(config)
    return float(populations(povm.basis, rho) @ povm.abort_weights)


def reading_moments(config, rho: DensityOperator, tol: float = QUAD_TOL) -> tuple[float, float]:
    """Mean and variance of the pointer reading, conditioned on no abort."""
    pops = populations(config.basis, rho)

    def integrand(q):
        p = outcome_pdf(config, rho, q)
        return np.array([p, q * p, q * q * p])

    (m0, m1, m2), _ = integrate_over_outcomes(integrand, config.N, config.overlaps[pops > 0], config.sigma, tol)
    mean = m1 / m0
    return float(mean), float(m2 / m0 - mean**2)


# --------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class Reading:
    Q: float


@dataclass(frozen=True)
class Abort:
    pass


ZenoOutcome = Reading | Abort


def _mixture_components(N: int, r: float, sigma: float):
    """Expand ``f^2`` into Gaussians N(mean, sigma^2/2) with weights summing to ``int f^2``."""
    a, w = binomial_terms(N, r)
    i, j = np.triu_indices(a.size)
    weight = w[i] * w[j] * np.exp(-((a[i] - a[j]) ** 2) / (4 * sigma**2))
    weight[i != j] *= 2
    return (a[i] + a[j]) / 2, weight


def _sample_component(N: int, r: float, sigma: float, size: int, rng: np.random.Generator) -> np.ndarray:
    if size == 0:
        return np.empty(0)
    if N <= MIXTURE_MAX_N:
        means, weight = _mixture_components(N, r, sigma)
        k = rng.choice(means.size, size=size, p=weight / weight.sum())
        return means[k] + rng.standard_normal(size) * sigma / np.sqrt(2)
    lo, hi = _integration_window(sigma)
    step = min(sigma, gamma(N, r, sigma)) / 20
    grid = np.linspace(lo, hi, int(np.ceil((hi - lo) / step)) + 1)
    dens = f_exact(N, r, sigma, grid) ** 2
    cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) / 2 * np.diff(grid))])
    return np.interp(rng.random(size), cdf / cdf[-1], grid)


def sample_outcomes(config, rho: DensityOperator, size: int, rng: np.random.Generator):
    """Draw ``size`` outcomes. Returns ``(Q, aborted)``; ``Q`` is NaN where aborted.

    Abort is decided first for every draw, then the branch ``j`` and the reading.
    """
    povm = _as_povm(config)
    pops = populations(povm.basis, rho)
    p_abort = float(pops @ povm.abort_weights)
    aborted = rng.random(size) < p_abort
    Q = np.full(size, np.nan)
    ok = np.flatnonzero(~aborted)
    branch_w = pops * (1 - povm.abort_weights)
    if ok.size:
        branch = rng.choice(povm.basis.dim, size=ok.size, p=branch_w / branch_w.sum())
        for j in range(povm.basis.dim):
            sel = ok[branch == j]
            Q[sel] = _sample_component(povm.N, povm.overlaps[j], povm.sigma, sel.size, rng)
    return Q, aborted


def sample_outcome(config, rho: DensityOperator, rng: np.random.Generator) -> ZenoOutcome:
    Q, aborted = sample_outcomes(config, rho, 1, rng)
    return Abort() if aborted[0] else Reading(float(Q[0]))


# --------------------------------------------------------------------------
# brute-force oracle


@dataclass(frozen=True)
class GridSpec:
    """Uniform pointer grid ``lo + k (hi - lo)/points`` for ``k < points``."""

    points: int = 4096
    lo: float = -4.0
    hi: float = 4.0

    @property
    def dx(self) -> float:
        return (self.hi - self.lo) / self.points

    def grid(self) -> np.ndarray:
        return self.lo + self.dx * np.arange(self.points)


@dataclass(frozen=True, eq=False)
class OracleResult:
    Q: np.ndarray
    cell_probabilities: np.ndarray
    abort_probability: float


def _shift(psi: np.ndarray, k: int) -> np.ndarray:
    """Translate pointer amplitudes by ``k`` cells toward larger Q, zero filled."""
    out = np.zeros_like(psi)
    if k > 0:
        out[:, k:] = psi[:, :-k]
    elif k < 0:
        out[:, :k] = psi[:, -k:]
    else:
        out[:] = psi
    return out


def grid_oracle(config: ZenoConfig, rho: DensityOperator, grid_spec: GridSpec = GridSpec()) -> OracleResult:
    """Simulate system (x) pointer directly: protection, ``U(dt)``, protection, ...

    ``U(dt) = P_plus (x) exp(-iP/N) + P_minus (x) exp(+iP/N)`` translates the
    pointer by ``+-1/N``, applied here as an exact lattice shift. Branches are
    kept per protection outcome ``j``; only the all-equal records survive.
    """
    N = config.N
    if N > ORACLE_MAX_N:
        raise ValueError(f"grid oracle supports N <= {ORACLE_MAX_N}")
    k_float = (1.0 / N) / grid_spec.dx
    k = int(round(k_float))
    if k < 1 or abs(k_float - k) > 1e-9:
        raise ValueError(f"pointer shift 1/N = {1 / N} is not a whole number of grid cells (dx = {grid_spec.dx})")
    check_same_dim(config.dim, rho.dim)

    Q = grid_spec.grid()
    phi = pointer_wavefunction(config.sigma, Q).astype(complex)
    p_plus, p_minus = spectral_split(config.observable)
    projectors = config.basis.projectors()
    lam, vecs = np.linalg.eigh(rho.matrix)

    density = np.zeros(Q.size)
    for weight, v in zip(lam, vecs.T):
        if weight <= 1e-15:
            continue
        for proj in projectors:
            psi = np.outer(proj @ v, phi)
            for _ in range(N):
                psi = p_plus @ _shift(psi, k) + p_minus @ _shift(psi, -k)
                psi = proj @ psi
            density += weight * np.sum(np.abs(psi) ** 2, axis=0)
    cells = density * grid_spec.dx
    return OracleResult(Q, cells, float(1.0 - cells.sum()))


def total_variation(p, q) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))
