import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qphase.exceptions import InvalidDimensionError, InvalidStateError
from qphase.operators import (
    fidelity_pure,
    gauge_fix,
    hs_inner,
    make_annihilation,
    make_generator_basis,
    make_spin,
    operator_from_dict,
    operator_to_dict,
    pauli,
    random_hermitian,
    random_ket,
    spin_ladder,
)


def test_annihilation_two_levels():
    assert np.array_equal(make_annihilation(2), np.array([[0, 1], [0, 0]], dtype=complex))


def test_number_operator_and_truncated_commutator():
    a = make_annihilation(4)
    ad = a.conj().T
    assert np.allclose(ad @ a, np.diag([0, 1, 2, 3]))
    assert np.allclose(a @ ad - ad @ a, np.diag([1, 1, 1, -3]))


def test_annihilation_rejects_one_level():
    with pytest.raises(InvalidDimensionError):
        make_annihilation(1)


@pytest.mark.parametrize("two_j", [1, 2, 3, 4])
def test_spin_algebra(two_j):
    sx, sy, sz = make_spin(two_j)
    j = two_j / 2
    assert np.allclose(sx @ sy - sy @ sx, 1j * sz)
    assert np.allclose(sx @ sx + sy @ sy + sz @ sz, j * (j + 1) * np.eye(two_j + 1))
    assert np.allclose(np.diag(sz).real, j - np.arange(two_j + 1))


def test_spin_half_matches_pauli():
    sx, sy, sz = make_spin(1)
    px, py, pz = pauli()
    assert np.allclose(2 * sx, px) and np.allclose(2 * sy, py) and np.allclose(2 * sz, pz)


def test_ladder_operators_raise():
    sp, sm, sz = spin_ladder(2)
    # S+ = (Sx + iSy)/sqrt(2) shifts m upward by one: [Sz, S+] = S+
    assert np.allclose(sz @ sp - sp @ sz, sp)
    assert np.allclose(sm, sp.conj().T)


def test_gell_mann_su3_standard_form():
    basis = make_generator_basis(3)
    lam2 = np.array([[0, -1j, 0], [1j, 0, 0], [0, 0, 0]])
    lam8 = np.diag([1, 1, -2]) / np.sqrt(3)
    assert np.allclose(basis[basis.index("a", 1, 2)], lam2 / np.sqrt(2))
    assert np.allclose(basis[basis.index("d", 2, 2)], lam8 / np.sqrt(2))
    assert len(basis) == 8


def test_su2_is_scaled_pauli():
    basis = make_generator_basis(2)
    px, py, pz = pauli()
    assert np.allclose(basis.generators, np.array([px, py, pz]) / np.sqrt(2))
    # sigma_y has coordinates (0, sqrt(2), 0)
    assert np.allclose(basis.coefficients(py).real, [0, np.sqrt(2), 0])


@pytest.mark.parametrize("n", range(2, 9))
def test_basis_properties(n):
    basis = make_generator_basis(n)
    E = basis.generators
    assert len(basis) == n * n - 1
    assert np.max(np.abs(E - np.conj(np.transpose(E, (0, 2, 1))))) < 1e-12
    assert np.max(np.abs(np.trace(E, axis1=1, axis2=2))) < 1e-12
    gram = np.einsum("aij,bji->ab", E, E)
    assert np.max(np.abs(gram - np.eye(n * n - 1))) < 1e-12


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 7), seed=st.integers(0, 2**32 - 1))
def test_basis_round_trip(n, seed):
    basis = make_generator_basis(n)
    h = random_hermitian(n, np.random.default_rng(seed), traceless=True)
    coeffs = basis.coefficients(h)
    assert np.max(np.abs(coeffs.imag)) < 1e-12
    assert np.allclose(basis.reconstruct(coeffs.real), h, atol=1e-10)


def test_gauge_fix_is_phase_invariant(rng):
    psi = random_ket(5, rng)
    fixed = gauge_fix(psi)
    assert np.allclose(gauge_fix(np.exp(0.7j) * psi), fixed)
    k = np.argmax(np.abs(fixed))
    assert fixed[k].imag == pytest.approx(0.0, abs=1e-15) and fixed[k].real > 0


def test_gauge_fix_zero_vector():
    with pytest.raises(InvalidStateError):
        gauge_fix(np.zeros(3))


def test_overlaps(rng):
    psi = random_ket(4, rng)
    assert fidelity_pure(psi, 1j * psi) == pytest.approx(1.0)
    a = random_hermitian(3, rng)
    assert hs_inner(a, a).real == pytest.approx(np.sum(np.abs(a) ** 2))


def test_operator_dict_round_trip(rng):
    a = random_hermitian(4, rng)
    assert np.array_equal(operator_from_dict(operator_to_dict(a)), a)
