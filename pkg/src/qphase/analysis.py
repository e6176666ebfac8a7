"""Validation tools: phase histograms, fidelity, density reconstruction from a
phase distribution, quasiprobability functions and the classical vdP limit.
"""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from ._validation import check_density, check_operator
from .dynamics import trajectory_rng
from .exceptions import (
    InvalidDimensionError,
    InvalidParameterError,
    InvalidStateError,
    NoCycleError,
)
from .limit_cycle import isochron_phase, match_phase, sample_cycle

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True, eq=False)
class Histogram:
    """Probability density over ``[0, 2π)`` on ``n_bins`` equal bins."""

    density: np.ndarray

    def __post_init__(self):
        density = np.asarray(self.density, dtype=float)
        if density.ndim != 1 or density.size == 0:
            raise InvalidDimensionError("histogram density must be a non-empty 1-D array")
        if np.any(density < 0) or not np.all(np.isfinite(density)):
            raise InvalidParameterError("histogram densities must be finite and nonnegative")
        density.setflags(write=False)
        object.__setattr__(self, "density", density)

    @property
    def n_bins(self):
        return self.density.size

    @property
    def width(self):
        return TWO_PI / self.n_bins

    @property
    def edges(self):
        return np.linspace(0.0, TWO_PI, self.n_bins + 1)

    @property
    def centers(self):
        return (np.arange(self.n_bins) + 0.5) * self.width

    @property
    def max_density(self):
        return float(self.density.max())

    def total(self):
        return float(self.density.sum() * self.width)

    @classmethod
    def from_counts(cls, counts):
        counts = np.asarray(counts, dtype=float)
        total = counts.sum()
        if total <= 0:
            raise InvalidParameterError("histogram needs at least one sample")
        return cls(counts / (total * TWO_PI / counts.size))

    @classmethod
    def from_samples(cls, theta, n_bins=64):
        return cls.from_counts(bin_counts(theta, n_bins))

    @classmethod
    def uniform(cls, n_bins=64):
        return cls(np.full(n_bins, 1.0 / TWO_PI))

    def to_csv(self, path):
        edges = self.edges
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["theta_lo", "theta_hi", "density"])
            for i, p in enumerate(self.density):
                writer.writerow([repr(float(edges[i])), repr(float(edges[i + 1])), repr(float(p))])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "density" not in reader.fieldnames:
                raise InvalidParameterError(f"{path}: expected a 'density' column")
            density = [float(row["density"]) for row in reader]
        return cls(np.array(density))


def bin_counts(theta, n_bins):
    """Counts of wrapped phases in ``n_bins`` equal bins of ``[0, 2π)``."""
    theta = np.mod(np.ravel(theta), TWO_PI)
    idx = np.minimum((theta / TWO_PI * n_bins).astype(int), n_bins - 1)
    return np.bincount(idx, minlength=n_bins).astype(float)


def compare_distributions(h1, h2):
    """Total-variation distance ``½ Σ |P1 - P2| Δθ``."""
    if h1.n_bins != h2.n_bins:
        raise InvalidDimensionError(f"histograms have {h1.n_bins} and {h2.n_bins} bins")
    return float(0.5 * np.abs(h1.density - h2.density).sum() * h1.width)


# --------------------------------------------------------------------------
# Density operators
# --------------------------------------------------------------------------

def _psd_sqrt(rho, name):
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    if w[0] < -1e-6:
        raise InvalidStateError(f"{name} has eigenvalue {w[0]:.3g} below -1e-6")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(rho1, rho2):
    """Uhlmann fidelity ``(Tr sqrt(sqrt(ρ1) ρ2 sqrt(ρ1)))²``.

    Evaluated as the squared trace norm of ``sqrt(ρ1) sqrt(ρ2)``, which avoids
    square roots of roundoff-level eigenvalues for rank-deficient states.
    """
    rho1 = check_operator(rho1)
    rho2 = check_operator(rho2, rho1.shape[0])
    s1 = _psd_sqrt(rho1, "rho1")
    s2 = _psd_sqrt(rho2, "rho2")
    nuclear = np.linalg.svd(s1 @ s2, compute_uv=False).sum()
    return float(min(1.0, nuclear**2))


def reconstruct_density(hist, lc):
    """``ρ = Σ_i P_i Δθ |ψ0(θ_i)><ψ0(θ_i)|`` at the bin centres."""
    states = sample_cycle(lc, hist.centers)
    weights = hist.density * hist.width
    rho = np.einsum("b,bi,bj->ij", weights, states, states.conj())
    rho = 0.5 * (rho + rho.conj().T)
    return check_density(rho / np.trace(rho).real)


def pure_density(psi):
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


# --------------------------------------------------------------------------
# Quasiprobability functions
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PhaseSpaceGrid:
    """Quasiprobability values on a rectangular grid, ``values[i, j]`` at ``(x[i], p[j])``."""

    x: np.ndarray = field(repr=False)
    p: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    kind: str = "wigner"

    def integral(self):
        return float(np.trapezoid(np.trapezoid(self.values, self.p, axis=1), self.x))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "p", "value"])
            for i, xv in enumerate(self.x):
                for j, pv in enumerate(self.p):
                    writer.writerow([repr(float(xv)), repr(float(pv)), repr(float(self.values[i, j]))])


def default_axis(n, n_points=201):
    half = np.sqrt(2 * n) + 2
    return np.linspace(-half, half, n_points)


def _truncation_check(rho):
    tail = rho[-1, -1].real
    if tail > 1e-3:
        logger.warning("top Fock level holds population %.3g; phase-space map is truncated", tail)


def wigner(rho, x=None, p=None):
    """Wigner function ``W(x, p)`` of a state in the truncated Fock basis.

    Convention ``a = (x + ip)/sqrt(2)``, normalized so that the vacuum has
    ``W(0, 0) = 1/π``.  Evaluated from the Laguerre-polynomial series of the
    displaced-parity matrix elements.
    """
    rho = check_operator(rho)
    n = rho.shape[0]
    _truncation_check(rho)
    x = default_axis(n) if x is None else np.asarray(x, dtype=float)
    p = default_axis(n) if p is None else np.asarray(p, dtype=float)
    alpha = (x[:, None] + 1j * p[None, :]) / np.sqrt(2.0)
    r2 = 4.0 * np.abs(alpha) ** 2
    gauss = np.exp(-0.5 * r2)
    W = np.zeros(alpha.shape)
    for m in range(n):
        W += ((-1) ** m) * rho[m, m].real * eval_genlaguerre(m, 0, r2) * gauss
        for k in range(m + 1, n):
            d = k - m
            coef = (-1) ** m * np.exp(0.5 * (gammaln(m + 1) - gammaln(k + 1)))
            term = coef * (2.0 * alpha) ** d * eval_genlaguerre(m, d, r2) * gauss
            W += 2.0 * (rho[m, k] * term).real
    # 2/π on the α plane, halved by dα² = dx dp / 2
    return PhaseSpaceGrid(x=x, p=p, values=W / np.pi, kind="wigner")


def coherent_state(alpha, n):
    """Coherent state amplitudes ``<k|α>`` for k < n (not renormalized after truncation)."""
    alpha = np.asarray(alpha, dtype=complex)
    k = np.arange(n)
    log_amp = -0.5 * gammaln(k + 1)
    with np.errstate(divide="ignore"):
        amps = np.exp(log_amp) * alpha[..., None] ** k
    amps = amps * np.exp(-0.5 * np.abs(alpha[..., None]) ** 2)
    return amps


def husimi_q(rho, x=None, p=None):
    """Husimi function ``Q(α) = <α|ρ|α>/π`` on the α plane, ``α = x + i p``."""
    rho = check_operator(rho)
    n = rho.shape[0]
    _truncation_check(rho)
    half = np.sqrt(n) + 2
    x = np.linspace(-half, half, 201) if x is None else np.asarray(x, dtype=float)
    p = np.linspace(-half, half, 201) if p is None else np.asarray(p, dtype=float)
    alpha = x[:, None] + 1j * p[None, :]
    c = coherent_state(alpha, n)
    Q = np.einsum("xpi,ij,xpj->xp", c.conj(), rho, c).real / np.pi
    return PhaseSpaceGrid(x=x, p=p, values=np.clip(Q, 0.0, None), kind="husimi")


def spin_coherent_state(theta, phi, n):
    """Spin coherent state on the basis ``m = j, ..., -j`` with ``j = (n-1)/2``."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    two_j = n - 1
    k = np.arange(n)  # k = j - m
    log_binom = gammaln(two_j + 1) - gammaln(k + 1) - gammaln(two_j - k + 1)
    c, s = np.cos(theta / 2)[..., None], np.sin(theta / 2)[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        amps = np.exp(0.5 * log_binom) * c ** (two_j - k) * s**k
    return amps * np.exp(1j * k * phi[..., None])


def spin_husimi_q(rho, n_theta=91, n_phi=181):
    """Spin Husimi function ``(2j+1)/(4π) <θφ|ρ|θφ>`` over the sphere."""
    rho = check_operator(rho)
    n = rho.shape[0]
    theta = np.linspace(0.0, np.pi, n_theta)
    phi = np.linspace(0.0, TWO_PI, n_phi)
    c = spin_coherent_state(theta[:, None], phi[None, :], n)
    Q = np.einsum("tpi,ij,tpj->tp", c.conj(), rho, c).real * n / (4 * np.pi)
    return PhaseSpaceGrid(x=theta, p=phi, values=np.clip(Q, 0.0, None), kind="spin_husimi")


# --------------------------------------------------------------------------
# Classical van der Pol limit
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SemiclassicalVdP:
    """Classical limit cycle ``|α| = r*`` rotating at ``omega``."""

    r_star: float
    amplitude: float
    omega: float
    epsilon: float

    def reference_prc(self, theta, phase0=0.0):
        """Classical PRC for a kick along the momentum quadrature, ``-sin(θ+φ0)/(√2 r*)``."""
        return -np.sin(np.asarray(theta) + phase0) / (np.sqrt(2.0) * self.r_star)


def semiclassical_vdp(delta=1.0, g1g=0.5, g1d=0.0, g2d=1.0, **_ignored):
    """Radial fixed point ``r* = sqrt(ε/(2 γ2d))`` of the mean-field vdP equation."""
    eps = float(g1g) - float(g1d)
    if eps <= 0:
        raise NoCycleError(f"gain minus loss is {eps:.3g}; no classical limit cycle")
    if g2d <= 0:
        raise InvalidParameterError("two-photon loss must be positive")
    r_star = np.sqrt(eps / (2.0 * g2d))
    return SemiclassicalVdP(r_star=float(r_star), amplitude=float(np.sqrt(2.0) * r_star),
                            omega=float(abs(delta)), epsilon=eps)


def simulate_classical_vdp(delta, g1g, g1d, g2d, t_end, dt, seed=0, alpha0=None):
    """Heun integration of ``dα = [iΔα + ε/2 α - γ2d|α|²α] dt + sqrt(γ1g) ∘ dW``.

    Returns ``(times, alpha)``; the noise is one real Wiener process.
    """
    eps = g1g - g1d
    rng = trajectory_rng(seed, 0)
    n_steps = int(round(t_end / dt))
    a = complex(alpha0 if alpha0 is not None else np.sqrt(max(eps, 1e-12) / (2 * g2d)))

    def drift(z):
        return 1j * delta * z + 0.5 * eps * z - g2d * abs(z) ** 2 * z

    out = np.empty(n_steps + 1, complex)
    out[0] = a
    dws = np.sqrt(dt) * rng.standard_normal(n_steps)
    sg = np.sqrt(g1g)
    for i in range(n_steps):
        pred = a + drift(a) * dt + sg * dws[i]
        a = a + 0.5 * (drift(a) + drift(pred)) * dt + sg * dws[i]
        out[i + 1] = a
    return np.arange(n_steps + 1) * dt, out


# --------------------------------------------------------------------------
# Phase statistics of SSE ensembles
# --------------------------------------------------------------------------

def sse_phases(lc, states, method="isochron", n_periods=None, tol=1e-6):
    """Phase of each SSE state: asymptotic (isochron) or nearest point on the cycle.

    The isochron tolerance defaults to 1e-6 rad, far below any histogram bin
    width, which keeps large batches of off-cycle states affordable.
    """
    states = np.asarray(states)
    if method == "isochron":
        return isochron_phase(lc, states, n_periods=n_periods, tol=tol)
    if method == "nearest":
        return match_phase(lc, states)[0]
    raise InvalidParameterError(f"unknown phase method {method!r}")


def sse_phase_histogram(lc, states, n_bins=64, method="isochron", n_periods=None, tol=1e-6):
    return Histogram.from_samples(sse_phases(lc, states, method, n_periods, tol), n_bins)


def quadrature_statistics(values):
    """Mean and standard error of a 1-D sample."""
    values = np.ravel(values)
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.size))
