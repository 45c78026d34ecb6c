import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from protmeas.qcore import (
    PAULI_X,
    PAULI_Z,
    DensityOperator,
    Observable,
    OrthonormalBasis,
    QuantumChannel,
    QuantumValueError,
    StateVector,
    apply_channel,
    choi_matrix,
    dephasing_channel,
    expectation,
    kraus_to_superoperator,
    matrix_from_json,
    matrix_to_json,
    min_choi_eigenvalue,
    named_basis,
    random_basis,
    random_density,
    random_two_outcome,
    spectral_split,
    trace_preservation_error,
    unvec,
    vec,
)

S2 = 1 / np.sqrt(2)
PLUS = StateVector([S2, S2])
seeds = st.integers(0, 2**32 - 1)


def _explicit_dephasing(basis, rho):
    out = np.zeros_like(rho)
    for j in range(basis.dim):
        v = basis.vectors[:, j]
        p = np.outer(v, v.conj())
        out += p @ rho @ p
    return out


# -- types ------------------------------------------------------------------


def test_state_rejects_unnormalized_and_scalar():
    with pytest.raises(QuantumValueError):
        StateVector([1.0, 1.0])
    with pytest.raises(QuantumValueError):
        StateVector([1.0])
    assert StateVector.normalized([3, 4j]).dim == 2


def test_arrays_are_read_only():
    s = StateVector([1, 0])
    with pytest.raises(ValueError):
        s.amplitudes[0] = 0


def test_hermitian_symmetrized_within_threshold():
    m = PAULI_X + 1e-10 * np.array([[0, 1], [0, 0]])
    obs = Observable(m)
    np.testing.assert_array_equal(obs.matrix, obs.matrix.conj().T)
    with pytest.raises(QuantumValueError):
        Observable(PAULI_X + 1e-6 * np.array([[0, 1], [0, 0]]))


def test_density_invariants():
    with pytest.raises(QuantumValueError):
        DensityOperator(np.diag([0.6, 0.6]))
    with pytest.raises(QuantumValueError):
        DensityOperator(np.diag([1.2, -0.2]))
    assert DensityOperator.maximally_mixed(3).dim == 3


def test_two_outcome_flag_checks_spectrum():
    Observable(PAULI_Z, two_outcome=True)
    with pytest.raises(QuantumValueError):
        Observable(np.diag([1.0, 0.5]), two_outcome=True)


def test_basis_rejects_non_orthonormal():
    with pytest.raises(QuantumValueError):
        OrthonormalBasis(np.array([[1, 1], [0, 1]], dtype=complex))


def test_index_of_threshold():
    b = named_basis("X")
    assert b.index_of(PLUS) == 0
    assert b.index_of(StateVector([S2, -S2])) == 1
    assert b.index_of(StateVector([1, 0])) is None
    tilted = StateVector.normalized([1, 1 + 1e-4])
    assert b.index_of(tilted) is None
    assert b.index_of(tilted, threshold=0.99) == 0


def test_channel_rejects_non_cptp():
    with pytest.raises(QuantumValueError):
        QuantumChannel(2 * np.eye(4))
    # transpose map: trace preserving but not completely positive
    t = np.zeros((4, 4))
    for i in range(2):
        for j in range(2):
            e = np.zeros((2, 2))
            e[i, j] = 1
            t[:, 2 * j + i] = vec(e.T)
    assert trace_preservation_error(t) < 1e-15
    assert min_choi_eigenvalue(t) < -0.5
    with pytest.raises(QuantumValueError):
        QuantumChannel(t)


def test_vectorization_is_column_stacking(rng):
    a, b, rho = (rng.standard_normal((3, 3)) for _ in range(3))
    np.testing.assert_allclose(vec(a @ rho @ b), np.kron(b.T, a) @ vec(rho), atol=1e-12)
    np.testing.assert_array_equal(unvec(vec(rho)), rho)
    assert vec(np.array([[1, 2], [3, 4]])).tolist() == [1, 3, 2, 4]


def test_choi_of_identity_is_unnormalized_bell_projector():
    c = choi_matrix(np.eye(4))
    phi = np.array([1, 0, 0, 1])
    np.testing.assert_allclose(c, np.outer(phi, phi))


def test_json_round_trip(rng):
    m = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    np.testing.assert_array_equal(matrix_from_json(matrix_to_json(m)), m)
    assert matrix_to_json(np.array([1j]))[0] == [0.0, 1.0]


# -- expectation ---------------------------------------------------------------


def test_expectation_examples():
    assert expectation(Observable(PAULI_X), PLUS) == pytest.approx(1.0, abs=1e-15)
    assert expectation(Observable(PAULI_Z), PLUS) == pytest.approx(0.0, abs=1e-15)
    psi = StateVector([np.cos(0.3), np.sin(0.3)])
    assert expectation(Observable(PAULI_Z), psi) == pytest.approx(np.cos(0.6), abs=1e-14)


def test_expectation_dimension_mismatch():
    with pytest.raises(QuantumValueError):
        expectation(Observable(PAULI_Z), StateVector([1, 0, 0]))


# -- spectral split --------------------------------------------------------------


def test_spectral_split_pauli():
    pp, pm = spectral_split(Observable(PAULI_Z, two_outcome=True))
    np.testing.assert_allclose(pp, np.diag([1, 0]))
    np.testing.assert_allclose(pm, np.diag([0, 1]))
    pp, pm = spectral_split(Observable(PAULI_X, two_outcome=True))
    np.testing.assert_allclose(pp, PLUS.projector(), atol=1e-15)
    np.testing.assert_allclose(pm, StateVector([S2, -S2]).projector(), atol=1e-15)


def test_spectral_split_rejects_other_spectra():
    with pytest.raises(QuantumValueError):
        spectral_split(Observable(np.diag([2.0, -1.0])))


def test_spectral_split_degenerate_rank(rng):
    obs = random_two_outcome(4, rng, n_plus=3)
    pp, pm = spectral_split(obs)
    assert np.trace(pp).real == pytest.approx(3)
    assert np.trace(pm).real == pytest.approx(1)


@settings(max_examples=100, deadline=None)
@given(seed=seeds, d=st.integers(2, 5))
def test_spectral_split_round_trip(seed, d):
    rng = np.random.default_rng(seed)
    obs = random_two_outcome(d, rng)
    # eigendecomposition oracle: rebuild from eigenvectors with signs forced to +-1
    ev, u = np.linalg.eigh(obs.matrix)
    rebuilt = (u * np.sign(ev)) @ u.conj().T
    pp, pm = spectral_split(obs)
    np.testing.assert_allclose(pp - pm, rebuilt, atol=1e-10)
    np.testing.assert_allclose(pp + pm, np.eye(d), atol=1e-10)
    np.testing.assert_allclose(pp @ pp, pp, atol=1e-10)
    np.testing.assert_allclose(pm @ pm, pm, atol=1e-10)


# -- channels -------------------------------------------------------------------


def test_dephasing_examples():
    ch = dephasing_channel(OrthonormalBasis.computational(2))
    rho = DensityOperator(np.diag([0.3, 0.7]))
    np.testing.assert_allclose(apply_channel(ch, rho).matrix, rho.matrix)
    np.testing.assert_allclose(apply_channel(ch, PLUS.density()).matrix, np.eye(2) / 2, atol=1e-15)


def test_dephasing_qutrit_matches_direct_sum(rng):
    basis = random_basis(3, rng)
    rho = random_density(3, rng)
    out = apply_channel(dephasing_channel(basis), rho).matrix
    np.testing.assert_allclose(out, _explicit_dephasing(basis, rho.matrix), atol=1e-13)


def test_identity_channel(rng):
    rho = random_density(3, rng)
    np.testing.assert_allclose(apply_channel(QuantumChannel.identity(3), rho).matrix, rho.matrix)


def test_apply_channel_dimension_mismatch(rng):
    with pytest.raises(QuantumValueError):
        apply_channel(QuantumChannel.identity(2), random_density(3, rng))


@settings(max_examples=50, deadline=None)
@given(seed=seeds, d=st.integers(2, 4))
def test_dephasing_fixed_points_and_idempotence(seed, d):
    rng = np.random.default_rng(seed)
    basis = random_basis(d, rng)
    ch = dephasing_channel(basis)
    w = rng.dirichlet(np.ones(d))
    rho = DensityOperator((basis.vectors * w) @ basis.vectors.conj().T)
    assert np.linalg.norm(apply_channel(ch, rho).matrix - rho.matrix) < 1e-12
    np.testing.assert_allclose(ch.compose(ch).superoperator, ch.superoperator, atol=1e-12)
    assert min_choi_eigenvalue(ch.superoperator) > -1e-10
    assert trace_preservation_error(ch.superoperator) < 1e-10


@settings(max_examples=50, deadline=None)
@given(seed=seeds, d=st.integers(2, 4))
def test_composition_matches_sequential_application(seed, d):
    rng = np.random.default_rng(seed)
    a = dephasing_channel(random_basis(d, rng))
    b = dephasing_channel(random_basis(d, rng))
    rho = random_density(d, rng)
    sequential = apply_channel(a, apply_channel(b, rho)).matrix
    np.testing.assert_allclose(apply_channel(a.compose(b), rho).matrix, sequential, atol=1e-12)
    out = apply_channel(a.compose(b), rho)
    assert np.linalg.eigvalsh(out.matrix).min() > -1e-10


def test_kraus_superoperator_matches_sum(rng):
    basis = random_basis(2, rng)
    k = list(basis.projectors())
    rho = random_density(2, rng).matrix
    np.testing.assert_allclose(unvec(kraus_to_superoperator(k) @ vec(rho)), sum(p @ rho @ p for p in k), atol=1e-14)
