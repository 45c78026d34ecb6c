"""Finite-dimensional quantum primitives shared by the rest of the package.

Superoperators act on density operators vectorized by column stacking,
``vec(rho) = rho.reshape(-1, order="F")``, so that
``vec(A rho B) = kron(B.T, A) @ vec(rho)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

HERMITIAN_REJECT = 1e-8
NORM_TOL = 1e-12
BASIS_TOL = 1e-10
EIG_TOL = 1e-10
MATCH_THRESHOLD = 1 - 1e-10

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


class QuantumValueError(ValueError):
    """Raised when an array does not satisfy the invariants of a quantum type."""


# --------------------------------------------------------------------------
# validation helpers


def check_square(matrix, name: str = "matrix") -> np.ndarray:
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise QuantumValueError(f"{name} must be square, got shape {m.shape}")
    return m


def check_hermitian(matrix, name: str = "matrix", tol: float = HERMITIAN_REJECT) -> np.ndarray:
    """Return the Hermitian part of ``matrix``, rejecting anything further than ``tol`` away."""
    m = check_square(matrix, name)
    if np.max(np.abs(m - m.conj().T), initial=0.0) > tol:
        raise QuantumValueError(f"{name} is not Hermitian (tolerance {tol})")
    return (m + m.conj().T) / 2


def check_same_dim(*dims: int) -> int:
    if len(set(dims)) != 1:
        raise QuantumValueError(f"dimension mismatch: {dims}")
    return dims[0]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


# --------------------------------------------------------------------------
# types


@dataclass(frozen=True, eq=False)
class StateVector:
    """A normalized pure state of dimension ``d >= 2``."""

    amplitudes: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if v.size < 2:
            raise QuantumValueError("state dimension must be at least 2")
        if abs(np.linalg.norm(v) - 1) > NORM_TOL:
            raise QuantumValueError(f"state is not normalized (norm {np.linalg.norm(v)!r})")
        object.__setattr__(self, "amplitudes", _frozen(v))

    @classmethod
    def normalized(cls, amplitudes) -> "StateVector":
        v = np.asarray(amplitudes, dtype=complex).reshape(-1)
        return cls(v / np.linalg.norm(v))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def density(self) -> "DensityOperator":
        return DensityOperator(self.projector())


@dataclass(frozen=True, eq=False)
class DensityOperator:
    matrix: np.ndarray

    def __post_init__(self):
        m = check_hermitian(self.matrix, "density operator")
        if abs(np.trace(m).real - 1) > NORM_TOL * max(1, m.shape[0]):
            raise QuantumValueError(f"density operator trace is {np.trace(m).real!r}, expected 1")
        if np.linalg.eigvalsh(m).min() < -EIG_TOL:
            raise QuantumValueError("density operator is not positive semidefinite")
        object.__setattr__(self, "matrix", _frozen(m))

    @classmethod
    def maximally_mixed(cls, d: int) -> "DensityOperator":
        return cls(np.eye(d, dtype=complex) / d)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class Observable:
    """Hermitian observable. ``two_outcome`` asserts the spectrum lies in {+1, -1}."""

    matrix: np.ndarray
    two_outcome: bool = False

    def __post_init__(self):
        m = check_hermitian(self.matrix, "observable")
        if self.two_outcome:
            ev = np.linalg.eigvalsh(m)
            if np.max(np.abs(np.abs(ev) - 1)) > EIG_TOL:
                raise QuantumValueError("two-outcome observable must have eigenvalues +1/-1")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class OrthonormalBasis:
    """Orthonormal basis; ``vectors`` are stored as the columns of a unitary."""

    vectors: np.ndarray

    def __post_init__(self):
        u = check_square(self.vectors, "basis")
        if np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) > BASIS_TOL:
            raise QuantumValueError("basis vectors are not orthonormal")
        object.__setattr__(self, "vectors", _frozen(u))

    @classmethod
    def from_states(cls, states: Sequence[StateVector]) -> "OrthonormalBasis":
        return cls(np.column_stack([s.amplitudes for s in states]))

    @classmethod
    def computational(cls, d: int) -> "OrthonormalBasis":
        return cls(np.eye(d, dtype=complex))

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    def __len__(self) -> int:
        return self.dim

    def __getitem__(self, j: int) -> StateVector:
        return StateVector(self.vectors[:, j])

    def projectors(self) -> np.ndarray:
        """Array of shape (d, d, d) with ``out[j] = |psi_j><psi_j|``."""
        u = self.vectors
        return np.einsum("aj,bj->jab", u, u.conj())

    def index_of(self, state: StateVector, threshold: float = MATCH_THRESHOLD) -> int | None:
        """Index of the basis element matching ``state`` (squared overlap above ``threshold``)."""
        overlaps = np.abs(self.vectors.conj().T @ state.amplitudes) ** 2
        j = int(np.argmax(overlaps))
        return j if overlaps[j] > threshold else None


@dataclass(frozen=True, eq=False)
class QuantumChannel:
    """CPTP map stored as a column-stacking superoperator of shape (d^2, d^2)."""

    superoperator: np.ndarray

    def __post_init__(self):
        s = check_square(self.superoperator, "superoperator")
        d = int(round(np.sqrt(s.shape[0])))
        if d * d != s.shape[0]:
            raise QuantumValueError("superoperator size is not a perfect square")
        s = _frozen(s)
        object.__setattr__(self, "superoperator", s)
        if trace_preservation_error(s) > EIG_TOL:
            raise QuantumValueError("channel is not trace preserving")
        if min_choi_eigenvalue(s) < -EIG_TOL:
            raise QuantumValueError("channel is not completely positive")

    @classmethod
    def from_kraus(cls, kraus: Sequence[np.ndarray]) -> "QuantumChannel":
        return cls(kraus_to_superoperator(kraus))

    @classmethod
    def identity(cls, d: int) -> "QuantumChannel":
        return cls(np.eye(d * d, dtype=complex))

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.superoperator.shape[0])))

    def choi(self) -> np.ndarray:
        return choi_matrix(self.superoperator)

    def compose(self, other: "QuantumChannel") -> "QuantumChannel":
        """The channel ``self o other`` (``other`` acts first)."""
        check_same_dim(self.dim, other.dim)
        return QuantumChannel(self.superoperator @ other.superoperator)


# --------------------------------------------------------------------------
# superoperator utilities


def vec(matrix: np.ndarray) -> np.ndarray:
    return np.asarray(matrix).reshape(-1, order="F")


def unvec(vector: np.ndarray, d: int | None = None) -> np.ndarray:
    v = np.asarray(vector)
    if d is None:
        d = int(round(np.sqrt(v.size)))
    return v.reshape((d, d), order="F")


def kraus_to_superoperator(kraus: Sequence[np.ndarray]) -> np.ndarray:
    return sum(np.kron(np.conj(k), k) for k in map(np.asarray, kraus))


def choi_matrix(superoperator: np.ndarray) -> np.ndarray:
    """Choi matrix ``sum_ij |i><j| (x) C(|i><j|)``."""
    s = np.asarray(superoperator)
    d = int(round(np.sqrt(s.shape[0])))
    choi = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = 1
            choi += np.kron(e, unvec(s @ vec(e), d))
    return choi


def min_choi_eigenvalue(superoperator: np.ndarray) -> float:
    c = choi_matrix(superoperator)
    return float(np.linalg.eigvalsh((c + c.conj().T) / 2).min())


def trace_preservation_error(superoperator: np.ndarray) -> float:
    s = np.asarray(superoperator)
    d = int(round(np.sqrt(s.shape[0])))
    return float(np.max(np.abs(vec(np.eye(d)).conj() @ s - vec(np.eye(d)).conj())))


# --------------------------------------------------------------------------
# operations


def expectation(obs: Observable, state: StateVector) -> float:
    """``<psi|A|psi>`` as a real number."""
    check_same_dim(obs.dim, state.dim)
    v = state.amplitudes
    value = np.vdot(v, obs.matrix @ v)
    if abs(value.imag) > NORM_TOL * max(1.0, np.abs(obs.matrix).max()):
        raise QuantumValueError("expectation value has a non-negligible imaginary part")
    return float(value.real)


def spectral_split(obs: Observable) -> tuple[np.ndarray, np.ndarray]:
    """Projectors onto the +1 and -1 eigenspaces of a two-outcome observable.

    Eigenspaces may be degenerate, in which case the projectors have rank > 1.
    """
    if not obs.two_outcome:
        Observable(obs.matrix, two_outcome=True)
    ident = np.eye(obs.dim, dtype=complex)
    return (ident + obs.matrix) / 2, (ident - obs.matrix) / 2


def dephasing_channel(basis: OrthonormalBasis) -> QuantumChannel:
    """Non-selective measurement in ``basis``: ``rho -> sum_j P_j rho P_j``."""
    return QuantumChannel.from_kraus(list(basis.projectors()))


def apply_channel(ch: QuantumChannel, rho: DensityOperator) -> DensityOperator:
    d = check_same_dim(ch.dim, rho.dim)
    return DensityOperator(unvec(ch.superoperator @ vec(rho.matrix), d))


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_basis(d: int, rng: np.random.Generator) -> OrthonormalBasis:
    return OrthonormalBasis(random_unitary(d, rng))


def random_density(d: int, rng: np.random.Generator) -> DensityOperator:
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    m = g @ g.conj().T
    return DensityOperator(m / np.trace(m).real)


def random_two_outcome(d: int, rng: np.random.Generator, n_plus: int | None = None) -> Observable:
    if n_plus is None:
        n_plus = int(rng.integers(1, d))
    u = random_unitary(d, rng)
    signs = np.array([1.0] * n_plus + [-1.0] * (d - n_plus))
    return Observable((u * signs) @ u.conj().T, two_outcome=True)


# --------------------------------------------------------------------------
# JSON form: nested lists of [re, im] pairs


def matrix_to_json(matrix: np.ndarray) -> list:
    m = np.asarray(matrix, dtype=complex)
    return np.stack([m.real, m.imag], axis=-1).tolist()


def matrix_from_json(data) -> np.ndarray:
    a = np.asarray(data, dtype=float)
    if a.shape[-1] != 2:
        raise QuantumValueError("expected trailing [re, im] pairs")
    return a[..., 0] + 1j * a[..., 1]


NAMED_OBSERVABLES = {"X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z}


def named_basis(name: str) -> OrthonormalBasis:
    """Eigenbasis of a Pauli operator, ordered +1 then -1."""
    s = 1 / np.sqrt(2)
    bases = {
        "Z": [[1, 0], [0, 1]],
        "X": [[s, s], [s, -s]],
        "Y": [[s, s], [1j * s, -1j * s]],
    }
    try:
        return OrthonormalBasis(np.array(bases[name.upper()], dtype=complex))
    except KeyError:
        raise QuantumValueError(f"unknown basis name {name!r}") from None
