"""Recovering the protected state from black-box access to the protection.

Two routes:

* Zeno protection acts, from the outside, as the dephasing channel in Bob's
  basis. Process tomography on that channel yields its fixed-point set, whose
  common eigenbasis is Bob's basis; one projective measurement of the
  protected system then identifies the state.
* Hamiltonian protection gives access to ``U(t) = exp(-i H t)``. Recovering
  ``H`` from one or more unitaries gives the protected ground state without
  touching the system.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import schur
from scipy.optimize import linear_sum_assignment
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .qcore import (
    EIG_TOL,
    MATCH_THRESHOLD,
    OrthonormalBasis,
    QuantumChannel,
    QuantumValueError,
    StateVector,
    random_basis,
    check_hermitian,
    check_same_dim,
    min_choi_eigenvalue,
    trace_preservation_error,
    unvec,
    vec,
)


class NotAProtectionChannel(ValueError):
    """The channel's fixed points are not the diagonal operators of a single basis."""


class SpectralAmbiguityError(ValueError):
    """Energies cannot be pinned down from the supplied unitaries.

    ``candidates`` lists, for each joint eigenvector, the energies consistent
    with every sample inside the energy bound.
    """

    def __init__(self, message: str, candidates: list[list[float]]):
        super().__init__(message)
        self.candidates = candidates


# --------------------------------------------------------------------------
# preparation and measurement sets


def _operator_span_rank(projectors: Sequence[np.ndarray]) -> int:
    return int(np.linalg.matrix_rank(np.array([vec(p) for p in projectors]), tol=1e-9))


@dataclass(frozen=True, eq=False)
class PreparationSet:
    states: tuple[StateVector, ...]

    def __post_init__(self):
        states = tuple(self.states)
        d = check_same_dim(*(s.dim for s in states))
        if _operator_span_rank([s.projector() for s in states]) < d * d:
            raise QuantumValueError("preparation projectors do not span the operator space")
        object.__setattr__(self, "states", states)

    @property
    def dim(self) -> int:
        return self.states[0].dim

    def __len__(self) -> int:
        return len(self.states)


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    bases: tuple[OrthonormalBasis, ...]

    def __post_init__(self):
        bases = tuple(self.bases)
        d = check_same_dim(*(b.dim for b in bases))
        if _operator_span_rank([p for b in bases for p in b.projectors()]) < d * d:
            raise QuantumValueError("measurement projectors do not span the operator space")
        object.__setattr__(self, "bases", bases)

    @property
    def dim(self) -> int:
        return self.bases[0].dim

    def __len__(self) -> int:
        return len(self.bases)


def standard_preparations(d: int) -> PreparationSet:
    """``|k>``, ``(|j>+|k>)/sqrt2`` and ``(|j>+i|k>)/sqrt2``: d^2 states in all."""
    eye = np.eye(d, dtype=complex)
    states = [StateVector(eye[k]) for k in range(d)]
    for j in range(d):
        for k in range(j + 1, d):
            states.append(StateVector((eye[j] + eye[k]) / np.sqrt(2)))
            states.append(StateVector((eye[j] + 1j * eye[k]) / np.sqrt(2)))
    return PreparationSet(tuple(states))


def _is_prime(n: int) -> bool:
    return n >= 2 and all(n % k for k in range(2, int(n**0.5) + 1))


def standard_measurements(d: int, rng: np.random.Generator | None = None) -> MeasurementSet:
    """Mutually unbiased bases for prime ``d``; otherwise ``d + 1`` random bases."""
    if d == 2:
        s = 1 / np.sqrt(2)
        mats = [
            np.array([[s, s], [s, -s]]),
            np.array([[s, s], [1j * s, -1j * s]]),
            np.eye(2),
        ]
        return MeasurementSet(tuple(OrthonormalBasis(np.asarray(m, dtype=complex)) for m in mats))
    if _is_prime(d):
        j = np.arange(d)
        omega = np.exp(2j * np.pi / d)
        mats = [np.eye(d, dtype=complex)]
        for k in range(d):
            mats.append(np.array([omega ** (k * j**2 + m * j) for m in range(d)]).T / np.sqrt(d))
        return MeasurementSet(tuple(OrthonormalBasis(m) for m in mats))
    rng = rng if rng is not None else np.random.default_rng(0)
    return MeasurementSet(tuple(random_basis(d, rng) for _ in range(d + 1)))


# --------------------------------------------------------------------------
# statistics


@dataclass(frozen=True, eq=False)
class ProbabilityTable:
    """Outcome statistics ``p(m|j,k)``, shape ``(preparations, bases, outcomes)``.

    ``counts`` is ``None`` for exact (infinite-shot) tables.
    """

    probabilities: np.ndarray
    counts: np.ndarray | None = None
    shots: float = math.inf

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 3:
            raise ValueError("probability table must have shape (preparations, bases, outcomes)")
        sums = p.sum(axis=-1)
        tol = 1e-9 if math.isinf(self.shots) else 1.0 / math.sqrt(self.shots)
        if np.max(np.abs(sums - 1)) > tol:
            raise ValueError("outcome probabilities do not sum to 1")
        object.__setattr__(self, "probabilities", p)
        if self.counts is not None:
            object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64))

    @property
    def exact(self) -> bool:
        return self.counts is None

    def to_json(self) -> str:
        payload = {"shape": list(self.probabilities.shape)}
        if self.exact:
            payload["shots"] = "inf"
            payload["probabilities"] = self.probabilities.tolist()
        else:
            payload["shots"] = int(self.shots)
            payload["counts"] = self.counts.tolist()
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "ProbabilityTable":
        data = json.loads(text)
        if data["shots"] == "inf":
            return cls(np.array(data["probabilities"], dtype=float))
        counts = np.array(data["counts"], dtype=np.int64)
        shots = int(data["shots"])
        return cls(counts / shots, counts, shots)


def exact_probabilities(channel: QuantumChannel, preps: PreparationSet, meas: MeasurementSet) -> np.ndarray:
    d = check_same_dim(channel.dim, preps.dim, meas.dim)
    out = np.empty((len(preps), len(meas), d))
    for j, phi in enumerate(preps.states):
        rho_out = unvec(channel.superoperator @ vec(phi.projector()), d)
        for k, basis in enumerate(meas.bases):
            u = basis.vectors
            out[j, k] = np.einsum("am,ab,bm->m", u.conj(), rho_out, u).real
    out = np.clip(out, 0.0, None)
    return out / out.sum(axis=-1, keepdims=True)


def simulate_statistics(
    channel: QuantumChannel,
    preps: PreparationSet,
    meas: MeasurementSet,
    shots: float,
    rng: np.random.Generator | None = None,
) -> ProbabilityTable:
    """Multinomial sampling of each (preparation, basis) cell; ``shots=math.inf`` is exact.

    Each cell draws from its own child generator spawned from ``rng``.
    """
    p = exact_probabilities(channel, preps, meas)
    if math.isinf(shots):
        return ProbabilityTable(p)
    shots = int(shots)
    if shots < 1:
        raise ValueError("shots must be at least 1")
    if rng is None:
        raise ValueError("finite-shot simulation needs a random generator")
    cells = p.reshape(-1, p.shape[-1])
    children = rng.spawn(len(cells))
    counts = np.array([child.multinomial(shots, cell) for child, cell in zip(children, cells)])
    counts = counts.reshape(p.shape)
    return ProbabilityTable(counts / shots, counts, shots)


# --------------------------------------------------------------------------
# reconstruction


@dataclass(frozen=True, eq=False)
class ChannelEstimate:
    """Linear-inversion superoperator with its positivity diagnostics (never repaired)."""

    superoperator: np.ndarray
    min_choi_eigenvalue: float
    trace_error: float
    residual: float

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.superoperator.shape[0])))

    @property
    def cp_violation(self) -> bool:
        return self.min_choi_eigenvalue < -EIG_TOL

    def to_channel(self) -> QuantumChannel:
        return QuantumChannel(self.superoperator)


def design_matrix(preps: PreparationSet, meas: MeasurementSet) -> np.ndarray:
    """Rows map ``vec(S)`` (column-stacked superoperator) to ``p(m|j,k)``."""
    rows = []
    for phi in preps.states:
        r = vec(phi.projector())
        for basis in meas.bases:
            for e in basis.projectors():
                rows.append(np.kron(r, vec(e).conj()))
    return np.array(rows)


def linear_inversion(table: ProbabilityTable, preps: PreparationSet, meas: MeasurementSet) -> ChannelEstimate:
    d = check_same_dim(preps.dim, meas.dim)
    expected = (len(preps), len(meas), d)
    if table.probabilities.shape != expected:
        raise ValueError(f"table shape {table.probabilities.shape} does not match {expected}")
    a = design_matrix(preps, meas)
    if np.linalg.matrix_rank(a, tol=1e-9) < d**4:
        raise ValueError("design matrix is rank deficient")
    b = table.probabilities.reshape(-1).astype(complex)
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    s = sol.reshape((d * d, d * d), order="F")
    return ChannelEstimate(
        s,
        min_choi_eigenvalue(s),
        trace_preservation_error(s),
        float(np.linalg.norm(a @ sol - b)),
    )


def _superoperator(channel) -> np.ndarray:
    if isinstance(channel, (QuantumChannel, ChannelEstimate)):
        return np.asarray(channel.superoperator)
    return np.asarray(channel)


def fixed_point_basis(
    channel,
    tol: float = 1e-8,
    n_fixed: int | None = None,
    rng: np.random.Generator | None = None,
    separation: float = 10.0,
) -> OrthonormalBasis:
    """Common eigenbasis of the channel's fixed-point set.

    The fixed points are the null space of ``S - I``: singular vectors with
    singular value below ``tol``. For noisy estimates pass ``n_fixed``; the
    ``n_fixed`` smallest are kept, provided they are separated from the rest
    by a factor of at least ``separation``. A random Hermitian element of the
    space is diagonalized; if its spectrum is degenerate it is first perturbed
    by a random diagonal of size 1e-6. Exact estimates must in addition have
    simultaneously diagonal fixed points.
    """
    s = _superoperator(channel)
    d = int(round(np.sqrt(s.shape[0])))
    rng = rng if rng is not None else np.random.default_rng(0)
    _, sv, vh = np.linalg.svd(s - np.eye(d * d))
    noisy = n_fixed is not None
    if not noisy:
        n_fixed = int(np.sum(sv < tol))
    if n_fixed != d:
        raise NotAProtectionChannel(
            f"fixed-point set has dimension {n_fixed}, a basis-dephasing channel on C^{d} has {d}"
        )
    if noisy and sv[-n_fixed - 1] < separation * max(sv[-n_fixed], np.finfo(float).tiny):
        raise NotAProtectionChannel(
            f"no clear fixed-point space: singular values {sv[-n_fixed - 1]:.3e} and {sv[-n_fixed]:.3e}"
        )
    fixed = [unvec(v, d) for v in vh[-n_fixed:].conj()]
    coeffs = rng.standard_normal(n_fixed) + 1j * rng.standard_normal(n_fixed)
    x = sum(c * f for c, f in zip(coeffs, fixed))
    h = (x + x.conj().T) / 2
    ev = np.linalg.eigvalsh(h)
    if np.min(np.diff(ev)) < 1e-9 * max(1.0, np.abs(ev).max()):
        h = h + np.diag(1e-6 * rng.standard_normal(d))
    _, u = np.linalg.eigh(h)
    if not noisy:
        scale = max(np.abs(f).max() for f in fixed)
        for f in fixed:
            g = u.conj().T @ f @ u
            if np.max(np.abs(g - np.diag(np.diag(g)))) > max(1e-6, 1e3 * tol) * scale:
                raise NotAProtectionChannel("fixed points are not simultaneously diagonal")
    return OrthonormalBasis(u)


def basis_fidelities(true: OrthonormalBasis, found: OrthonormalBasis) -> np.ndarray:
    """Per-element ``|<true_j|found_pi(j)>|^2`` under the best matching ``pi``; phases ignored."""
    check_same_dim(true.dim, found.dim)
    overlap = np.abs(true.vectors.conj().T @ found.vectors) ** 2
    rows, cols = linear_sum_assignment(-overlap)
    return overlap[rows, cols]


def identify_state(
    basis: OrthonormalBasis,
    system_state: StateVector,
    rng: np.random.Generator,
    threshold: float = MATCH_THRESHOLD,
) -> int:
    """Measure ``system_state`` in ``basis``.

    A state matching a basis element (squared overlap above ``threshold``)
    returns that index without consuming randomness; otherwise the outcome is
    Born-sampled.
    """
    check_same_dim(basis.dim, system_state.dim)
    p = np.abs(basis.vectors.conj().T @ system_state.amplitudes) ** 2
    j = int(np.argmax(p))
    if p[j] > threshold:
        return j
    return int(rng.choice(basis.dim, p=p / p.sum()))


# --------------------------------------------------------------------------
# Hamiltonian route


@dataclass(frozen=True, eq=False)
class HamiltonianEstimate:
    H: np.ndarray
    energy_bound: float
    energies: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "H", check_hermitian(self.H, "Hamiltonian estimate"))
        if np.max(np.abs(self.energies)) > self.energy_bound * (1 + 1e-9) + 1e-12:
            raise ValueError("recovered energies exceed the energy bound")


def _check_unitary(u) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise QuantumValueError("unitary must be square")
    if np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) > 1e-9:
        raise QuantumValueError("sample is not unitary")
    return u


def _energy_candidates(phase: float, t: float, bound: float, tol: float) -> np.ndarray:
    """Energies ``E`` in ``[-bound, bound]`` with ``exp(-i E t) = exp(i phase)``."""
    base = -phase / t
    period = 2 * np.pi / t
    lo = math.ceil((-bound - tol - base) / period)
    hi = math.floor((bound + tol - base) / period)
    return base + period * np.arange(lo, hi + 1)


def recover_hamiltonian(
    unitary_samples: Sequence[tuple[float, np.ndarray]],
    energy_bound: float,
    match_tol: float = 1e-6,
    rng: np.random.Generator | None = None,
) -> HamiltonianEstimate:
    """Recover ``H`` from samples ``(t, U(t))`` assuming ``|E_j| <= energy_bound``.

    The unitaries commute, so a random linear combination is diagonalized to
    obtain joint eigenvectors. For each eigenvector, every sample contributes
    the energies inside the bound consistent with its eigenphase; the
    intersection must be a single value. A sample with ``t * bound < pi``
    settles this alone. Otherwise, two samples at incommensurate times
    usually do.
    """
    if not energy_bound > 0:
        raise ValueError("energy_bound must be positive")
    if not unitary_samples:
        raise ValueError("need at least one unitary sample")
    ts = np.array([float(t) for t, _ in unitary_samples])
    if np.any(ts <= 0):
        raise ValueError("sample times must be positive")
    us = [_check_unitary(u) for _, u in unitary_samples]
    d = check_same_dim(*(u.shape[0] for u in us))
    rng = rng if rng is not None else np.random.default_rng(0)

    if len(us) == 1:
        combo = us[0]
    else:
        c = rng.standard_normal(len(us)) + 1j * rng.standard_normal(len(us))
        combo = sum(ci * u for ci, u in zip(c, us))
    _, z = schur(combo, output="complex")
    phases = np.array([[np.angle(np.vdot(z[:, k], u @ z[:, k])) for k in range(d)] for u in us])

    order = np.argsort(ts * energy_bound)
    energies = np.empty(d)
    all_candidates = []
    ambiguous = False
    for k in range(d):
        cand = _energy_candidates(phases[order[0], k], ts[order[0]], energy_bound, match_tol)
        for i in order[1:]:
            other = _energy_candidates(phases[i, k], ts[i], energy_bound, match_tol)
            cand = np.array([e for e in cand if other.size and np.min(np.abs(other - e)) < match_tol])
        all_candidates.append(sorted(float(e) for e in cand))
        if cand.size == 1:
            energies[k] = cand[0]
        else:
            ambiguous = True
    if ambiguous:
        msg = "energies are not determined by the samples within the bound"
        degenerate = [
            (float(t), k, l)
            for t, ph in zip(ts, phases)
            for k in range(d)
            for l in range(k + 1, d)
            if abs(np.angle(np.exp(1j * (ph[k] - ph[l])))) < 1e-9
        ]
        if degenerate:
            msg += f"; U(t) has degenerate eigenphases (t, j, k) = {degenerate}"
        raise SpectralAmbiguityError(f"{msg}; candidate spectra: {all_candidates}", all_candidates)
    energies = np.clip(energies, -energy_bound, energy_bound)
    h = (z * energies) @ z.conj().T
    return HamiltonianEstimate(h, energy_bound, energies, z)


def ground_state(H, gap_tol: float = 1e-8) -> StateVector:
    """Lowest eigenvector, phase fixed so the largest-magnitude amplitude is real positive."""
    h = check_hermitian(H, "Hamiltonian")
    ev, vecs = np.linalg.eigh(h)
    if ev.size > 1 and ev[1] - ev[0] <= gap_tol:
        raise ValueError(f"ground space is degenerate (gap {ev[1] - ev[0]:.3e})")
    v = vecs[:, 0]
    k = int(np.argmax(np.abs(v)))
    v = v * (abs(v[k]) / v[k])
    return StateVector(v / np.linalg.norm(v))


def displaced_oscillator_hamiltonian(d: int, c_q: float, c_p: float) -> np.ndarray:
    """``((p - c_p)^2 + (q - c_q)^2)/2`` with ``q``, ``p`` truncated to ``d`` Fock levels."""
    a = np.diag(np.sqrt(np.arange(1, d)), 1).astype(complex)
    q = (a + a.conj().T) / np.sqrt(2)
    p = 1j * (a.conj().T - a) / np.sqrt(2)
    eye = np.eye(d)
    dq, dp = q - c_q * eye, p - c_p * eye
    return (dp @ dp + dq @ dq) / 2


# --------------------------------------------------------------------------
# estimator front ends


class ChannelTomography(BaseEstimator):
    """Process tomography of a protection black box.

    ``fit`` takes a :class:`ProbabilityTable` and learns the channel and the
    basis it dephases in; ``predict`` measures protected states in that basis.

    Parameters
    ----------
    preparations, measurements : spanning sets used to collect the table.
    fixed_point_tol : singular-value threshold for the fixed-point space.
    n_fixed : take this many smallest singular vectors instead (noisy data).
    random_state : seed for the fixed-point mixing and for Born sampling.
    """

    def __init__(
        self,
        preparations: PreparationSet | None = None,
        measurements: MeasurementSet | None = None,
        fixed_point_tol: float = 1e-8,
        n_fixed: int | None = None,
        random_state: int | None = None,
    ):
        self.preparations = preparations
        self.measurements = measurements
        self.fixed_point_tol = fixed_point_tol
        self.n_fixed = n_fixed
        self.random_state = random_state

    def fit(self, X: ProbabilityTable, y=None):
        d = X.probabilities.shape[-1]
        preps = self.preparations or standard_preparations(d)
        meas = self.measurements or standard_measurements(d)
        rng = np.random.default_rng(self.random_state)
        self.estimate_ = linear_inversion(X, preps, meas)
        self.cp_violation_ = self.estimate_.cp_violation
        self.basis_ = fixed_point_basis(self.estimate_, self.fixed_point_tol, self.n_fixed, rng)
        self._rng = rng
        return self

    def predict(self, X: Sequence[StateVector]) -> np.ndarray:
        check_is_fitted(self, "basis_")
        return np.array([identify_state(self.basis_, s, self._rng) for s in X])


class HamiltonianTomography(BaseEstimator):
    """Learn ``H`` from ``(t, U(t))`` samples; ``ground_state_`` is the protected state."""

    def __init__(self, energy_bound: float = 1.0, match_tol: float = 1e-6, random_state: int | None = None):
        self.energy_bound = energy_bound
        self.match_tol = match_tol
        self.random_state = random_state

    def fit(self, X: Sequence[tuple[float, np.ndarray]], y=None):
        rng = np.random.default_rng(self.random_state)
        self.estimate_ = recover_hamiltonian(X, self.energy_bound, self.match_tol, rng)
        self.hamiltonian_ = self.estimate_.H
        self.ground_state_ = ground_state(self.hamiltonian_)
        return self

    def predict(self, X: Sequence[float]) -> np.ndarray:
        """Predicted unitaries ``U(t)`` for the given times."""
        check_is_fitted(self, "hamiltonian_")
        e, z = self.estimate_.energies, self.estimate_.eigenvectors
        return np.array([(z * np.exp(-1j * e * t)) @ z.conj().T for t in X])
