"""Reduced phase SDE of a monitored quantum limit cycle.

Stratonovich form:  dθ = [ω + p(θ)] dt + Σ_k Y_k(θ) ∘ dW_k
Ito form:           dθ = [ω + p(θ) + ½ Σ_k Y_k'(θ) Y_k(θ)] dt + Σ_k Y_k(θ) dW_k

with ``Y_k(θ) = Σ_l Z_l(θ) g_{k,l}(θ)`` and an optional weak perturbation
drift ``p(θ) = ε Σ_l f_l Z_l(θ)``.  Tables live on a uniform periodic grid and
are interpolated with periodic cubic splines; derivatives are spectral.
"""

import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .analysis import Histogram, bin_counts
from .dynamics import default_workers, trajectory_rng
from .exceptions import DivergenceError, InvalidDimensionError, InvalidParameterError
from .lie_decomp import noise_coefficients, perturbation_coeffs
from .limit_cycle import sample_cycle
from .operators import make_generator_basis

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
PHASE_SCHEMES = ("stratonovich", "ito")


def spectral_derivative(values):
    """d/dθ of periodic samples on ``θ_i = 2π i / n`` (last axis) via FFT."""
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    k = np.fft.rfftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        k[-1] = 0.0  # Nyquist mode has no odd-symmetric derivative
    return np.fft.irfft(1j * k * np.fft.rfft(values, axis=-1), n=n, axis=-1)


def _periodic_spline(theta, values):
    """Periodic cubic spline through ``values[..., i]`` at ``theta[i]``; vector valued."""
    values = np.atleast_2d(values)
    x = np.append(theta, TWO_PI)
    y = np.concatenate([values, values[:, :1]], axis=1)
    return CubicSpline(x, y.T, bc_type="periodic", axis=0)


@dataclass(frozen=True, eq=False)
class PhaseSDE:
    """Tables of the reduced phase equation on ``θ_i = 2π i / n``."""

    omega: float
    theta: np.ndarray = field(repr=False)
    Y: np.ndarray = field(repr=False)  # (M, n)
    dY: np.ndarray = field(repr=False)
    perturb: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        n = theta.size
        if not np.allclose(theta, TWO_PI * np.arange(n) / n, atol=1e-12):
            raise InvalidDimensionError("phase grid must be uniform on [0, 2π)")
        Y = np.asarray(self.Y, dtype=float).reshape(-1, n)
        dY = np.asarray(self.dY, dtype=float).reshape(-1, n)
        if dY.shape != Y.shape:
            raise InvalidDimensionError("Y and dY tables differ in shape")
        pert = None if self.perturb is None else np.asarray(self.perturb, dtype=float).reshape(n)
        for name, arr in (("theta", theta), ("Y", Y), ("dY", dY), ("perturb", pert)):
            if arr is not None:
                if not np.all(np.isfinite(arr)):
                    raise InvalidParameterError(f"phase SDE table {name} is not finite")
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
        m = Y.shape[0]
        rows = [Y, dY, np.zeros((1, n)) if pert is None else pert[None]]
        object.__setattr__(self, "_spline", _periodic_spline(theta, np.concatenate(rows)))
        object.__setattr__(self, "_m", m)

    @property
    def n_channels(self):
        return self._m

    @property
    def n_grid(self):
        return self.theta.size

    def tables(self, theta):
        """Interpolated ``(Y, dY, perturb)`` at phases ``theta``; Y has shape (..., M)."""
        theta = np.mod(np.asarray(theta, dtype=float), TWO_PI)
        vals = self._spline(theta)
        m = self._m
        return vals[..., :m], vals[..., m:2 * m], vals[..., 2 * m]

    def to_dict(self):
        return {
            "omega": self.omega,
            "theta": self.theta.tolist(),
            "Y": self.Y.tolist(),
            "dY": self.dY.tolist(),
            "perturb": None if self.perturb is None else self.perturb.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        n = len(data["theta"])
        return cls(
            omega=float(data["omega"]),
            theta=np.asarray(data["theta"], dtype=float),
            Y=np.asarray(data["Y"], dtype=float).reshape(-1, n),
            dY=np.asarray(data["dY"], dtype=float).reshape(-1, n),
            perturb=data.get("perturb"),
        )

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def build_phase_sde(lc, prc_table, basis=None):
    """Noise tables ``Y_k = Σ_l Z_l g_{k,l}`` on the PRC grid."""
    model = lc.model
    basis = basis or make_generator_basis(model.n)
    if prc_table.Z.shape[1] != len(basis):
        raise InvalidDimensionError(
            f"PRC table has {prc_table.Z.shape[1]} generators, basis has {len(basis)}"
        )
    theta = prc_table.theta
    if model.n_channels == 0:
        Y = np.zeros((0, theta.size))
    else:
        states = sample_cycle(lc, theta)
        g = noise_coefficients(states, model, basis)  # (n, M, L)
        Y = np.einsum("il,ikl->ki", prc_table.Z, g)
    return PhaseSDE(omega=lc.omega, theta=theta, Y=Y, dY=spectral_derivative(Y))


def add_perturbation(sde, Hp, eps, prc_table, basis=None):
    """Return a copy of ``sde`` with the drift ``ε Σ_l f_l Z_l(θ)`` of ``H -> H + ε Hp``."""
    basis = basis or make_generator_basis(int(round(np.sqrt(prc_table.Z.shape[1] + 1))))
    eps = float(eps)
    if abs(eps) > 0.2:
        logger.warning("perturbation strength %.3g is not small; phase reduction may fail", eps)
    if prc_table.theta.size != sde.n_grid:
        raise InvalidDimensionError("PRC table and phase SDE use different grids")
    f = perturbation_coeffs(Hp, basis)
    extra = eps * prc_table.combine(f)
    base = np.zeros(sde.n_grid) if sde.perturb is None else sde.perturb
    return replace(sde, perturb=base + extra)


def drift_ito(sde, theta):
    """``ω + p(θ) + ½ Σ_k Y_k'(θ) Y_k(θ)``."""
    Y, dY, pert = sde.tables(theta)
    return sde.omega + pert + 0.5 * np.sum(Y * dY, axis=-1)


def _check_scheme(scheme):
    scheme = {"strat": "stratonovich", "heun": "stratonovich", "euler": "ito"}.get(scheme, scheme)
    if scheme not in PHASE_SCHEMES:
        raise InvalidParameterError(f"unknown phase scheme {scheme!r}")
    return scheme


def step_phase(sde, theta, dW, dt, scheme="stratonovich"):
    """One step: Heun for the Stratonovich form, Euler-Maruyama for the Ito form.

    ``theta`` has shape (B,) and ``dW`` shape (B, M); the result is wrapped to ``[0, 2π)``.
    """
    scheme = _check_scheme(scheme)
    theta = np.asarray(theta, dtype=float)
    dW = np.asarray(dW, dtype=float).reshape(theta.shape + (sde.n_channels,))
    Y, dY, pert = sde.tables(theta)
    if scheme == "ito":
        a = sde.omega + pert + 0.5 * np.sum(Y * dY, axis=-1)
        out = theta + a * dt + np.sum(Y * dW, axis=-1)
    else:
        a = sde.omega + pert
        noise = np.sum(Y * dW, axis=-1)
        pred = theta + a * dt + noise
        Yp, _, pertp = sde.tables(pred)
        out = theta + 0.5 * (a + sde.omega + pertp) * dt + 0.5 * (noise + np.sum(Yp * dW, axis=-1))
    if not np.all(np.isfinite(out)):
        raise DivergenceError("phase trajectory produced non-finite values")
    out = np.mod(out, TWO_PI)
    return np.where(out >= TWO_PI, 0.0, out)


def _phase_block(sde, indices, n_steps, dt, seed, scheme, n_bins, discard, chunk=512):
    gens = [trajectory_rng(seed, i) for i in indices]
    theta = np.array([g.uniform(0.0, TWO_PI) for g in gens])
    counts = np.zeros(n_bins)
    sqdt = np.sqrt(dt)
    m = sde.n_channels
    for start in range(0, n_steps, chunk):
        c = min(chunk, n_steps - start)
        noise = sqdt * np.stack([g.standard_normal((c, m)) for g in gens], axis=1)
        for j in range(c):
            theta = step_phase(sde, theta, noise[j], dt, scheme)
            if start + j + 1 > discard:
                counts += bin_counts(theta, n_bins)
    return counts, theta


def stationary_distribution(sde, n_traj=10_000, t_end=None, dt=None, seed=0, n_bins=64,
                            scheme="stratonovich", n_jobs=None, block_size=1000):
    """Histogram of phases over all trajectories after discarding the first 20% of time.

    Trajectories start uniformly on the circle and draw from their own RNG
    stream, so the result depends only on ``seed`` and not on ``n_jobs``.
    """
    scheme = _check_scheme(scheme)
    t_end = float(t_end if t_end is not None else 200.0 / abs(sde.omega))
    if dt is None:
        Y, dY, pert = sde.tables(sde.theta)
        speed = abs(sde.omega) + np.abs(pert).max() + 0.5 * np.abs((Y * dY).sum(-1)).max()
        dt = min(0.01 * TWO_PI / abs(sde.omega), 0.05 / max(speed, 1e-12))
    n_steps = int(round(t_end / dt))
    discard = int(0.2 * n_steps)
    if n_steps - discard < 1:
        raise InvalidParameterError("t_end too short for the requested dt")
    blocks = [range(s, min(s + block_size, n_traj)) for s in range(0, n_traj, block_size)]
    n_jobs = default_workers() if n_jobs is None else n_jobs
    if n_jobs > 1 and len(blocks) > 1:
        from joblib import Parallel, delayed

        parts = Parallel(n_jobs=n_jobs)(
            delayed(_phase_block)(sde, list(b), n_steps, dt, seed, scheme, n_bins, discard) for b in blocks
        )
    else:
        parts = [_phase_block(sde, list(b), n_steps, dt, seed, scheme, n_bins, discard) for b in blocks]
    counts = np.sum([p[0] for p in parts], axis=0)
    return Histogram.from_counts(counts)


def simulate_phase(sde, theta0, t_end, dt, seed=0, scheme="stratonovich", index=0):
    """Single phase trajectory (unwrapped) for diagnostics; returns ``(times, theta)``."""
    scheme = _check_scheme(scheme)
    n_steps = int(round(t_end / dt))
    rng = trajectory_rng(seed, index)
    dws = np.sqrt(dt) * rng.standard_normal((n_steps, sde.n_channels))
    out = np.empty(n_steps + 1)
    out[0] = theta0
    th = np.array([np.mod(theta0, TWO_PI)])
    unwrapped = float(theta0)
    for i in range(n_steps):
        new = step_phase(sde, th, dws[i][None], dt, scheme)
        unwrapped += float(np.pi - np.mod(np.pi - (new[0] - th[0]), TWO_PI))
        th = new
        out[i + 1] = unwrapped
    return np.arange(n_steps + 1) * dt, out
