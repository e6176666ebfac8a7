"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

import numpy as np

from .exceptions import InvalidDimensionError, InvalidParameterError, InvalidStateError

HERMITIAN_ATOL = 1e-12


def check_ket(psi, n=None, normalize=False):
    """Return ``psi`` as a 1-D complex array, optionally checking its length."""
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim != 1:
        raise InvalidDimensionError(f"ket must be 1-D, got shape {psi.shape}")
    if psi.shape[0] < 2:
        raise InvalidDimensionError("ket dimension must be at least 2")
    if n is not None and psi.shape[0] != n:
        raise InvalidDimensionError(f"ket has dimension {psi.shape[0]}, expected {n}")
    if normalize:
        norm = np.linalg.norm(psi)
        if norm == 0.0:
            raise InvalidStateError("cannot normalize the zero vector")
        psi = psi / norm
    return psi


def check_kets(psi, n=None):
    """Return a batch of kets with shape ``(..., n)``."""
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim < 1:
        raise InvalidDimensionError("kets must have at least one axis")
    if n is not None and psi.shape[-1] != n:
        raise InvalidDimensionError(f"kets have dimension {psi.shape[-1]}, expected {n}")
    return psi


def check_operator(op, n=None, hermitian=False, atol=HERMITIAN_ATOL):
    op = np.asarray(op, dtype=complex)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise InvalidDimensionError(f"operator must be square, got shape {op.shape}")
    if n is not None and op.shape[0] != n:
        raise InvalidDimensionError(f"operator has dimension {op.shape[0]}, expected {n}")
    if hermitian and not is_hermitian(op, atol=atol):
        raise InvalidParameterError("operator is not Hermitian")
    return op


def check_density(rho, n=None, atol=1e-8):
    """Validate a density operator: Hermitian, unit trace, positive semidefinite."""
    rho = check_operator(rho, n)
    if not is_hermitian(rho, atol=1e-10):
        raise InvalidStateError("density operator is not Hermitian")
    if abs(np.trace(rho) - 1.0) > atol:
        raise InvalidStateError(f"density operator trace is {np.trace(rho).real:.3g}")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0] < -atol:
        raise InvalidStateError("density operator has negative eigenvalues")
    return rho


def is_hermitian(op, atol=HERMITIAN_ATOL):
    op = np.asarray(op)
    return bool(np.max(np.abs(op - op.conj().T), initial=0.0) < atol)


def check_positive(name, value, strict=False):
    value = float(value)
    if not np.isfinite(value) or value < 0 or (strict and value == 0):
        bound = "positive" if strict else "nonnegative"
        raise InvalidParameterError(f"{name} must be {bound}, got {value!r}")
    return value
