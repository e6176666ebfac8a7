"""Phase response curves of a quantum limit cycle.

The PRC of a Hermitian direction ``E`` at phase ``θ`` is the derivative of the
asymptotic phase along the unitary kick ``exp(-iεE)``:

    Z_E(θ) ≈ [Θ(e^{-iεE} ψ0(θ)) - Θ(e^{+iεE} ψ0(θ))] / (2ε),

with the phase difference wrapped into ``(-π, π]``.  Generator PRCs use the
basis elements ``E_l``; the direct method uses an arbitrary ``H_p``.
"""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_ket, check_operator, is_hermitian
from .dynamics import default_workers
from .exceptions import InvalidParameterError, InvalidStateError, NotConvergedError
from .limit_cycle import isochron_phase, sample_cycle, wrap_difference
from .operators import make_generator_basis

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-4


def _check_eps(eps):
    eps = float(eps)
    if not 1e-6 <= eps <= 1e-2:
        raise InvalidParameterError(f"eps must lie in [1e-6, 1e-2], got {eps}")
    return eps


def unitary_kicks(ops, eps):
    """``exp(-iε H)`` and ``exp(+iε H)`` for a stack of Hermitian operators, via eigh."""
    ops = np.asarray(ops, dtype=complex)
    w, v = np.linalg.eigh(ops)
    vh = np.conj(np.swapaxes(v, -1, -2))
    minus = (v * np.exp(-1j * eps * w)[..., None, :]) @ vh
    plus = (v * np.exp(1j * eps * w)[..., None, :]) @ vh
    return minus, plus


def _central_difference(lc, states0, ops, eps, n_periods):
    """PRC for every (state, operator) pair; returns shape ``(n_states, n_ops)``."""
    minus, plus = unitary_kicks(ops, eps)
    fwd = np.einsum("lij,tj->tli", minus, states0)
    bwd = np.einsum("lij,tj->tli", plus, states0)
    kicked = np.stack([fwd, bwd], axis=-2)  # (t, l, 2, N)
    theta = isochron_phase(lc, kicked, n_periods=n_periods)
    return wrap_difference(theta[..., 0] - theta[..., 1]) / (2.0 * eps)


def _prc_values(lc, thetas, ops, eps, n_periods, richardson, n_jobs=1, chunk=16):
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    states0 = sample_cycle(lc, thetas)

    def run(rows):
        z = _central_difference(lc, states0[rows], ops, eps, n_periods)
        if richardson:
            z_half = _central_difference(lc, states0[rows], ops, eps / 2, n_periods)
            z = (4.0 * z_half - z) / 3.0
        return z

    # fixed chunks keep results independent of the worker count
    parts = [np.arange(s, min(s + chunk, len(thetas))) for s in range(0, len(thetas), chunk)]
    n_jobs = n_jobs or default_workers()
    if n_jobs > 1 and len(parts) > 1:
        from joblib import Parallel, delayed

        out = Parallel(n_jobs=n_jobs)(delayed(run)(p) for p in parts)
    else:
        out = [run(p) for p in parts]
    return np.concatenate(out)


def prc_direct(lc, Hp, theta, eps=DEFAULT_EPS, n_periods=None, richardson=False):
    """PRC for the Hermitian perturbation ``Hp``; ``theta`` may be an array."""
    eps = _check_eps(eps)
    Hp = check_operator(Hp, lc.model.n)
    if not is_hermitian(Hp, atol=1e-10):
        raise InvalidParameterError("perturbation Hamiltonian is not Hermitian")
    z = _prc_values(lc, theta, Hp[None], eps, n_periods, richardson)[:, 0]
    return z if np.ndim(theta) else float(z[0])


def prc_generator(lc, l, theta, eps=DEFAULT_EPS, basis=None, n_periods=None, richardson=False):
    """PRC for generator ``E_l`` of the basis."""
    basis = basis or make_generator_basis(lc.model.n)
    if not 0 <= l < len(basis):
        raise InvalidParameterError(f"generator index {l} out of range 0..{len(basis) - 1}")
    return prc_direct(lc, basis[l], theta, eps, n_periods, richardson)


@dataclass(frozen=True, eq=False)
class PRCTable:
    """Generator PRCs ``Z[i, l] = Z_l(θ_i)`` on the uniform grid ``θ_i = 2π i / n``."""

    theta: np.ndarray = field(repr=False)
    Z: np.ndarray = field(repr=False)
    epsilon: float = DEFAULT_EPS
    labels: tuple = ()

    @property
    def n_theta(self):
        return self.theta.shape[0]

    def combine(self, coeffs):
        """``Σ_l f_l Z_l(θ_i)`` on the grid."""
        return self.Z @ np.asarray(coeffs, dtype=float)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["theta", "l", "Z"])
            for i, th in enumerate(self.theta):
                for l, z in enumerate(self.Z[i]):
                    writer.writerow([repr(float(th)), l, repr(float(z))])

    @classmethod
    def from_csv(cls, path, epsilon=DEFAULT_EPS):
        rows = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or set(reader.fieldnames) != {"theta", "l", "Z"}:
                raise InvalidParameterError(f"{path}: expected columns theta,l,Z")
            for row in reader:
                rows.append((float(row["theta"]), int(row["l"]), float(row["Z"])))
        theta = np.unique([r[0] for r in rows])
        n_l = max(r[1] for r in rows) + 1
        Z = np.full((len(theta), n_l), np.nan)
        index = {th: i for i, th in enumerate(theta)}
        for th, l, z in rows:
            Z[index[th], l] = z
        if np.isnan(Z).any():
            raise InvalidParameterError(f"{path}: incomplete PRC table")
        return cls(theta=theta, Z=Z, epsilon=epsilon)


def prc_table(lc, basis=None, n_theta=None, eps=DEFAULT_EPS, n_periods=None,
              richardson=False, n_jobs=1):
    """Generator PRC table on ``n_theta`` uniform phases (default: the cycle grid).

    A failing isochron evaluation aborts the whole table; the error message
    lists the offending ``(θ, l)`` pairs.
    """
    basis = basis or make_generator_basis(lc.model.n)
    n_theta = int(n_theta or lc.n_grid)
    if n_theta < 64:
        raise InvalidParameterError(f"n_theta must be >= 64, got {n_theta}")
    eps = _check_eps(eps)
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    try:
        Z = _prc_values(lc, theta, basis.generators, eps, n_periods, richardson, n_jobs)
    except NotConvergedError as exc:
        pairs = sorted({(float(theta[i // (2 * len(basis))]), (i // 2) % len(basis))
                        for i in exc.indices})
        raise NotConvergedError(f"PRC table failed at (theta, l) = {pairs[:10]}: {exc}",
                                exc.indices) from exc
    if not np.all(np.isfinite(Z)):
        raise NotConvergedError("PRC table contains non-finite entries")
    return PRCTable(theta=theta, Z=Z, epsilon=eps, labels=basis.labels)


def project_real(psi):
    """Chart ``(r_1..r_{N-1}, φ_1..φ_{N-1})`` with ``φ_i = arg ψ_i - arg ψ_N`` in ``[0, 2π)``.

    Angles of vanishing amplitudes are set to zero.
    """
    psi = check_ket(psi, normalize=True)
    ref = psi[-1]
    if abs(ref) < 1e-12:
        raise InvalidStateError("reference amplitude psi_N vanishes; chart undefined")
    r = np.abs(psi[:-1])
    phi = np.mod(np.angle(psi[:-1]) - np.angle(ref), 2 * np.pi)
    phi = np.where(r < 1e-15, 0.0, phi)
    return np.concatenate([r, phi])


def unproject_real(v):
    """Inverse of :func:`project_real`, with ``ψ_N`` real and positive."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] % 2 or v.shape[0] < 2:
        raise InvalidParameterError("chart vector must have even length 2N-2")
    m = v.shape[0] // 2
    r, phi = v[:m], v[m:]
    last2 = 1.0 - np.sum(r**2)
    if last2 <= 0:
        raise InvalidStateError("amplitudes exceed unit norm")
    return np.concatenate([r * np.exp(1j * phi), [np.sqrt(last2)]])
