"""Traceless Hermitian representation of the SSE noise and drift terms and
their coordinates in the generator basis.

Any change of a normalized ket orthogonal to itself, ``|u>`` with
``<psi|u> = 0``, is generated by the traceless Hermitian operator
``H = i|u><psi| - i|psi><u|`` in the sense ``-i H |psi> = |u>``.  Components
parallel to ``|psi>`` only change the global phase and are dropped.
"""

import numpy as np

from ._validation import check_ket, check_kets, check_operator, is_hermitian
from .dynamics import deterministic_drift
from .exceptions import InvalidParameterError
from .operators import make_generator_basis

TRACE_ATOL = 1e-8
IMAG_ATOL = 1e-8


def _generator_of(psi, u):
    """``i|u><psi| - i|psi><u|`` for batches along leading axes."""
    out = 1j * np.einsum("...i,...j->...ij", u, psi.conj())
    return out + np.conj(np.swapaxes(out, -1, -2))


def _orthogonal(psi, v):
    ov = np.einsum("...i,...i->...", psi.conj(), v)
    return v - ov[..., None] * psi


def noise_hermitian(L, psi):
    """``H = i(L - <L>)|psi><psi| + h.c.`` for a normalized ket (or a batch)."""
    psi = check_kets(psi)
    L = check_operator(L, psi.shape[-1])
    lpsi = psi @ L.T
    return _generator_of(psi, _orthogonal(psi, lpsi))


def drift_hermitian(psi, model):
    """Hermitian generator of the part of the deterministic flow orthogonal to ``psi``."""
    psi = check_kets(psi, model.n)
    return _generator_of(psi, _orthogonal(psi, deterministic_drift(psi, model)))


def decompose_traceless(Hh, basis):
    """Real coordinates ``g_l = Tr[Hh E_l]`` of a traceless Hermitian operator."""
    Hh = check_operator(Hh, basis.n)
    if not is_hermitian(Hh, atol=1e-10):
        raise InvalidParameterError("operator to decompose is not Hermitian")
    if abs(np.trace(Hh)) > TRACE_ATOL:
        raise InvalidParameterError(f"operator has trace {np.trace(Hh):.3g}; expected traceless")
    return _real(basis.coefficients(Hh))


def perturbation_coeffs(Hp, basis):
    """Coordinates ``f_l = Tr[(Hp - Tr[Hp]/N) E_l]`` of a Hermitian perturbation.

    The identity part only rotates the global phase, so it is projected out
    rather than rejected.
    """
    Hp = check_operator(Hp, basis.n)
    if not is_hermitian(Hp, atol=1e-10):
        raise InvalidParameterError("perturbation Hamiltonian is not Hermitian")
    Hp = Hp - np.trace(Hp) / basis.n * np.eye(basis.n)
    return _real(basis.coefficients(Hp))


def _real(coeffs):
    coeffs = np.asarray(coeffs)
    resid = np.max(np.abs(coeffs.imag), initial=0.0)
    if resid > IMAG_ATOL:
        raise InvalidParameterError(f"coefficients have imaginary residue {resid:.3g}")
    return coeffs.real.copy()


def noise_coefficients(psi, model, basis=None):
    """``g[..., k, l] = Tr[H_k E_l]`` for every channel at a batch of kets.

    Uses ``Tr[H_k E_l] = -2 Im <psi|E_l|u_k>`` with ``u_k = (L_k - <L_k>)|psi>``.
    """
    basis = basis or make_generator_basis(model.n)
    psi = check_kets(psi, model.n)
    L = model.stacked_jumps()
    lpsi = np.einsum("kij,...j->...ki", L, psi)
    u = _orthogonal(psi[..., None, :], lpsi)
    epsi = np.einsum("lij,...i->...lj", basis.generators, psi.conj())  # <psi|E_l as rows
    return -2.0 * np.einsum("...lj,...kj->...kl", epsi, u).imag


def drift_coefficients(psi, model, basis=None):
    """Coordinates of :func:`drift_hermitian` in the generator basis."""
    basis = basis or make_generator_basis(model.n)
    psi = check_kets(psi, model.n)
    u = _orthogonal(psi, deterministic_drift(psi, model))
    epsi = np.einsum("lij,...i->...lj", basis.generators, psi.conj())
    return -2.0 * np.einsum("...lj,...j->...l", epsi, u).imag


def reconstruct_action(coeffs, basis, psi):
    """``Σ_l c_l (-i E_l)|psi>``, the ket change generated by the coefficients."""
    psi = check_ket(psi, basis.n)
    return -1j * basis.reconstruct(coeffs) @ psi
