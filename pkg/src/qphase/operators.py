"""Dense operators, spin matrices and the generalized Gell-Mann basis of su(N).

Kets are 1-D complex numpy arrays and operators are square complex arrays.
Everything is dense; the intended envelope is N up to a few hundred.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_ket, check_kets, check_operator
from .exceptions import InvalidDimensionError, InvalidStateError


def make_annihilation(n_levels):
    """Truncated bosonic annihilation operator with ``a[m, m+1] = sqrt(m+1)``."""
    n_levels = int(n_levels)
    if n_levels < 2:
        raise InvalidDimensionError(f"n_levels must be >= 2, got {n_levels}")
    return np.diag(np.sqrt(np.arange(1, n_levels)), k=1).astype(complex)


def make_spin(two_j):
    """Spin-j matrices ``(Sx, Sy, Sz)`` in the Sz eigenbasis ordered m = j, ..., -j."""
    two_j = int(two_j)
    if two_j < 1:
        raise InvalidDimensionError(f"two_j must be >= 1, got {two_j}")
    j = two_j / 2
    m = j - np.arange(two_j + 1)
    # <m+1|S+|m> = sqrt(j(j+1) - m(m+1)); row index of m+1 is one above m
    raising = np.diag(np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1)), k=1).astype(complex)
    sx = 0.5 * (raising + raising.conj().T)
    sy = -0.5j * (raising - raising.conj().T)
    sz = np.diag(m).astype(complex)
    return sx, sy, sz


def spin_ladder(two_j):
    """Ladder operators ``S± = (Sx ± i Sy) / sqrt(2)`` together with ``Sz``."""
    sx, sy, sz = make_spin(two_j)
    return (sx + 1j * sy) / np.sqrt(2), (sx - 1j * sy) / np.sqrt(2), sz


def pauli():
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    return sx, sy, sz


@dataclass(frozen=True)
class GeneratorBasis:
    """Trace-orthonormal basis ``E_l`` of traceless Hermitian N x N matrices.

    Ordering: symmetric off-diagonal pairs (j, k), j < k, in lexicographic
    order; then the antisymmetric pairs in the same order; then the N-1
    diagonal generators.  ``labels[l]`` is ``("s", j, k)``, ``("a", j, k)`` or
    ``("d", j, j)`` with 1-based indices.
    """

    n: int
    generators: np.ndarray = field(repr=False)
    labels: tuple = field(repr=False)

    def __len__(self):
        return self.generators.shape[0]

    def __getitem__(self, l):
        return self.generators[l]

    def __iter__(self):
        return iter(self.generators)

    def index(self, family, j, k):
        """Position of the generator labelled ``(family, j, k)``."""
        return self.labels.index((family, j, k))

    def coefficients(self, op):
        """``Tr[op E_l]`` for every generator (no tracelessness check)."""
        op = check_operator(op, self.n)
        return np.einsum("lij,ji->l", self.generators, op)

    def reconstruct(self, coeffs):
        coeffs = np.asarray(coeffs)
        if coeffs.shape[-1] != len(self):
            raise InvalidDimensionError(
                f"expected {len(self)} coefficients, got {coeffs.shape[-1]}"
            )
        return np.tensordot(coeffs, self.generators, axes=(-1, 0))


def make_generator_basis(n):
    """Generalized Gell-Mann generators of SU(n) normalized so Tr[E_m E_n] = δ_mn."""
    n = int(n)
    if n < 2:
        raise InvalidDimensionError(f"dimension must be >= 2, got {n}")
    pairs = [(j, k) for j in range(n) for k in range(j + 1, n)]
    gens, labels = [], []
    for j, k in pairs:
        g = np.zeros((n, n), dtype=complex)
        g[j, k] = g[k, j] = 1.0
        gens.append(g)
        labels.append(("s", j + 1, k + 1))
    for j, k in pairs:
        # standard Gell-Mann sign: -i above the diagonal (lambda_2 = sigma_y)
        g = np.zeros((n, n), dtype=complex)
        g[j, k] = -1j
        g[k, j] = 1j
        gens.append(g)
        labels.append(("a", j + 1, k + 1))
    for j in range(1, n):
        d = np.zeros(n)
        d[:j] = 1.0
        d[j] = -j
        gens.append(np.diag(np.sqrt(2.0 / (j * (j + 1))) * d).astype(complex))
        labels.append(("d", j, j))
    gens = np.array(gens)
    norms = np.sqrt(np.einsum("lij,lji->l", gens, gens).real)
    gens = gens / norms[:, None, None]
    gens.setflags(write=False)
    return GeneratorBasis(n=n, generators=gens, labels=tuple(labels))


def expectation(psi, op):
    """``<psi|op|psi> / <psi|psi>``; works on batches of kets along leading axes."""
    op = np.asarray(op, dtype=complex)
    psi = check_kets(psi, op.shape[0])
    num = np.einsum("...i,ij,...j->...", psi.conj(), op, psi)
    return num / np.einsum("...i,...i->...", psi.conj(), psi).real


def gauge_fix(psi):
    """Remove the global phase so the largest-magnitude amplitude is real and positive.

    Accepts a single ket or a batch with kets along the last axis.
    """
    psi = np.asarray(psi, dtype=complex)
    mags = np.abs(psi)
    pivot = np.take_along_axis(psi, np.argmax(mags, axis=-1)[..., None], axis=-1)
    if np.any(np.abs(pivot) == 0.0):
        raise InvalidStateError("cannot gauge-fix the zero vector")
    return psi * (np.abs(pivot) / pivot)


def hs_inner(a, b):
    """Hilbert-Schmidt inner product ``Tr[a^dagger b]``."""
    a = check_operator(a)
    b = check_operator(b, a.shape[0])
    return np.vdot(a, b)


def fidelity_pure(psi, phi):
    """Overlap modulus ``|<psi|phi>|`` of normalized kets (batched along leading axes)."""
    psi = np.asarray(psi)
    phi = np.asarray(phi)
    return np.abs(np.einsum("...i,...i->...", psi.conj(), phi))


def random_ket(n, rng):
    psi = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return psi / np.linalg.norm(psi)


def random_hermitian(n, rng, traceless=False):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    h = 0.5 * (a + a.conj().T)
    if traceless:
        h -= np.trace(h) / n * np.eye(n)
    return h


def operator_to_dict(op):
    op = check_operator(op)
    return {"n": int(op.shape[0]), "re": op.real.tolist(), "im": op.imag.tolist()}


def operator_from_dict(data):
    op = np.asarray(data["re"], dtype=float) + 1j * np.asarray(data["im"], dtype=float)
    return check_operator(op, int(data["n"]))


def ket_to_dict(psi):
    psi = check_ket(psi)
    return {"n": int(psi.shape[0]), "re": psi.real.tolist(), "im": psi.imag.tolist()}


def ket_from_dict(data):
    psi = np.asarray(data["re"], dtype=float) + 1j * np.asarray(data["im"], dtype=float)
    return check_ket(psi, int(data["n"]))
