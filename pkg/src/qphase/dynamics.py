"""Integrators for the master equation, the deterministic limit-cycle flow and
the diffusive stochastic Schrödinger equation (SSE).

All state-vector kernels accept batches: ``psi`` has shape ``(..., N)`` and
expectation values are normalized, ``<O> = <psi|O|psi> / <psi|psi>``.  With
normalized expectations the Stratonovich drift is skew for every norm, so
the deterministic flow conserves ``<psi|psi>`` exactly in continuous time.
"""

import logging
import os
import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._validation import check_density, check_ket, check_kets
from .exceptions import DivergenceError, InvalidParameterError, StabilityError

logger = logging.getLogger(__name__)

SCHEMES = ("ito_euler", "stratonovich_heun", "general_p")
_SCHEME_ALIASES = {"ito": "ito_euler", "stratonovich": "stratonovich_heun", "strat": "stratonovich_heun",
                   "heun": "stratonovich_heun", "p": "general_p"}


class _Kernel:
    """Operator products of one model, precomputed once and stacked for a single GEMM."""

    def __init__(self, model):
        n, m = model.n, model.n_channels
        L = model.stacked_jumps()
        Ld = np.conj(np.transpose(L, (0, 2, 1)))
        sum_ldl = np.einsum("kij,kjl->il", Ld, L) if m else np.zeros((n, n), complex)
        L2 = L @ L
        sum_l2 = L2.sum(axis=0) if m else np.zeros((n, n), complex)
        heff = model.H - 0.5j * sum_ldl
        self.n, self.m = n, m
        self.L = L
        self.X = L + Ld
        self.H = model.H
        self.ito_lin = -1j * heff
        self.strat_lin = -1j * heff - 0.5 * sum_l2
        # rows: [A0; L_1; ...; L_M]  -> psi @ stack.T == [A0 psi, L_k psi]
        self.strat_stack_t = np.concatenate([self.strat_lin[None], L]).reshape(-1, n).T.copy()
        self.ito_stack_t = np.concatenate([self.ito_lin[None], L]).reshape(-1, n).T.copy()
        self.p_stack_t = np.concatenate([self.ito_lin[None], L, L2]).reshape(-1, n).T.copy()
        self.jump_stack_t = L.reshape(-1, n).T.copy() if m else np.zeros((n, 0), complex)


_KERNELS = weakref.WeakKeyDictionary()


def _kernel(model):
    k = _KERNELS.get(model)
    if k is None:
        k = _KERNELS[model] = _Kernel(model)
    return k


def _norm2(psi):
    return np.einsum("...i,...i->...", psi.conj(), psi).real


def _split(out, n, parts):
    shape = out.shape[:-1]
    return out.reshape(*shape, parts, n)


def _channel_means(psi, lpsi, nrm):
    """<L_k> for each channel; ``lpsi`` has shape (..., M, N)."""
    return np.einsum("...i,...ki->...k", psi.conj(), lpsi) / nrm[..., None]


# --------------------------------------------------------------------------
# Deterministic limit-cycle flow
# --------------------------------------------------------------------------

def deterministic_drift(psi, model):
    """Noise-free part of the Stratonovich SSE, the deterministic limit-cycle flow.

    ``[-iH_eff + Σ_k (½<L†L> + <X>(L - <X>/2) + ¼(-2L² + <L²> + <L†²>))] psi``
    """
    k = _kernel(model)
    psi = np.asarray(psi, dtype=complex)
    out = _split(psi @ k.strat_stack_t, k.n, k.m + 1)
    a0psi, lpsi = out[..., 0, :], out[..., 1:, :]
    cpsi = psi.conj()
    nrm = np.einsum("...i,...i->...", cpsi, psi).real
    x = (2.0 / nrm)[..., None] * np.einsum("...i,...ki->...k", cpsi, lpsi).real
    re_a0 = np.einsum("...i,...i->...", cpsi, a0psi).real / nrm
    # the scalar terms reduce to -Re<A0> - ½Σ<X>²
    c = -re_a0 - 0.5 * np.einsum("...k,...k->...", x, x)
    return a0psi + np.einsum("...k,...ki->...i", x.astype(complex), lpsi) + c[..., None] * psi


def rk4_step(psi, model, dt, renormalize=False):
    """One RK4 step of the deterministic flow; ``dt`` may be an array per batch row."""
    dt = np.asarray(dt, dtype=float)
    if dt.ndim:
        dt = dt[..., None]
    k1 = deterministic_drift(psi, model)
    k2 = deterministic_drift(psi + 0.5 * dt * k1, model)
    k3 = deterministic_drift(psi + 0.5 * dt * k2, model)
    k4 = deterministic_drift(psi + dt * k3, model)
    out = psi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if renormalize:
        out = out / np.sqrt(_norm2(out))[..., None]
    return out


def propagate(psi, model, duration, dt, renormalize=True):
    """Integrate the deterministic flow for ``duration`` with RK4 steps of at most ``dt``.

    ``duration`` may be a scalar or an array broadcast against the batch
    (negative values integrate backwards).  Every row takes the same number
    of equal substeps.
    """
    psi = check_kets(psi, model.n)
    duration = np.asarray(duration, dtype=float)
    span = float(np.max(np.abs(duration), initial=0.0))
    if span == 0.0:
        return psi.copy()
    n_steps = max(1, int(np.ceil(span / dt - 1e-9)))
    h = duration / n_steps
    for _ in range(n_steps):
        psi = rk4_step(psi, model, h, renormalize=renormalize)
    return psi


def integrate_deterministic(psi0, model, t_end, dt, renormalize=False, record_every=1):
    """Fixed-step RK4 trajectory of the deterministic flow; returns ``(times, states)``."""
    psi = check_ket(psi0, model.n)
    n_steps = int(round(t_end / dt))
    times, states = [0.0], [psi]
    for i in range(1, n_steps + 1):
        psi = rk4_step(psi, model, dt, renormalize=renormalize)
        if i % record_every == 0 or i == n_steps:
            times.append(i * dt)
            states.append(psi)
    return np.array(times), np.array(states)


def projective_speed(psi, model):
    """Norm of the drift component orthogonal to ``psi`` (zero at projective fixed points)."""
    f = deterministic_drift(psi, model)
    nrm = _norm2(psi)
    par = np.einsum("...i,...i->...", psi.conj(), f) / nrm
    return np.sqrt(_norm2(f - par[..., None] * psi) / nrm)


# --------------------------------------------------------------------------
# Stochastic Schrödinger equation
# --------------------------------------------------------------------------

def ito_drift(psi, model):
    """Drift of the Ito SSE, ``[-iH_eff + Σ <X>/2 (L - <X>/4)] psi``."""
    k = _kernel(model)
    psi = check_kets(psi, k.n)
    out = _split(psi @ k.ito_stack_t, k.n, k.m + 1)
    a0psi, lpsi = out[..., 0, :], out[..., 1:, :]
    x = 2.0 * _channel_means(psi, lpsi, _norm2(psi)).real
    return a0psi + np.einsum("...k,...ki->...i", 0.5 * x, lpsi) - 0.125 * np.sum(x * x, -1)[..., None] * psi


def noise_terms(psi, model):
    """Diffusion vectors ``(L_k - <X_k>/2) psi`` with shape ``(..., M, N)``."""
    k = _kernel(model)
    psi = check_kets(psi, k.n)
    lpsi = _split(psi @ k.jump_stack_t, k.n, k.m)
    x = 2.0 * _channel_means(psi, lpsi, _norm2(psi)).real
    return lpsi - 0.5 * x[..., None] * psi[..., None, :]


def quadrature_means(psi, model):
    """``<X_k>`` for every channel, shape ``(..., M)``."""
    k = _kernel(model)
    psi = check_kets(psi, k.n)
    lpsi = _split(psi @ k.jump_stack_t, k.n, k.m)
    return 2.0 * _channel_means(psi, lpsi, _norm2(psi)).real


def general_p_drift(psi, model, p):
    """Deterministic terms of the SSE whose noise is evaluated at ``t + p dt``.

    ``p = 0`` is the Ito drift and ``p = 1/2`` the Stratonovich drift.
    """
    p = _check_p(p)
    k = _kernel(model)
    psi = check_kets(psi, k.n)
    if p == 0.0:
        return ito_drift(psi, model)
    out = _split(psi @ k.p_stack_t, k.n, 2 * k.m + 1)
    a0psi, lpsi, l2psi = out[..., 0, :], out[..., 1:k.m + 1, :], out[..., k.m + 1:, :]
    nrm = _norm2(psi)
    x = 2.0 * _channel_means(psi, lpsi, nrm).real
    ldl = _norm2(lpsi) / nrm[..., None]
    re_l2 = _channel_means(psi, l2psi, nrm).real
    ito = a0psi + np.einsum("...k,...ki->...i", 0.5 * x, lpsi) - 0.125 * np.sum(x * x, -1)[..., None] * psi
    # ½<X L> + ½<L† X> = Re<L²> + <L†L>
    scal = 0.75 * x * x - re_l2 - ldl
    corr = l2psi.sum(axis=-2) - np.einsum("...k,...ki->...i", x, lpsi) + scal.sum(-1)[..., None] * psi
    return ito - p * corr


def norm_rate_formula(psi, model, p):
    """Closed-form ``d<psi|psi>/dt`` under the deterministic general-p terms."""
    p = _check_p(p)
    k = _kernel(model)
    psi = check_kets(psi, k.n)
    lpsi = _split(psi @ k.jump_stack_t, k.n, k.m)
    nrm = _norm2(psi)
    x = 2.0 * _channel_means(psi, lpsi, nrm).real
    ldl = _norm2(lpsi) / nrm[..., None]
    return np.sum(0.25 * x * x - ldl - p * (0.5 * x * x - 2.0 * ldl), axis=-1)


def _check_p(p):
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise InvalidParameterError(f"p must lie in [0, 1], got {p}")
    return p


def _renorm(psi):
    return psi / np.sqrt(_norm2(psi))[..., None]


def _add_noise(psi, b, dw):
    return psi + np.einsum("...k,...ki->...i", dw, b)


def step_sse_ito(psi, model, dw, dt, renormalize=True):
    """Euler-Maruyama step of the Ito SSE; ``dw`` has shape ``(..., M)``."""
    a = ito_drift(psi, model)
    out = _add_noise(psi + dt * a, noise_terms(psi, model), np.asarray(dw))
    return _renorm(out) if renormalize else out


def step_sse_general_p(psi, model, dw, dt, p, renormalize=True):
    """Step of the SSE with the noise evaluated at ``t + p dt``.

    The drift is the general-p drift at ``psi``; the diffusion is evaluated at
    the predictor ``psi + p (a dt + b dW)``.  ``p = 0`` is bitwise the Ito step.
    """
    p = _check_p(p)
    dw = np.asarray(dw)
    if p == 0.0:
        return step_sse_ito(psi, model, dw, dt, renormalize=renormalize)
    a = general_p_drift(psi, model, p)
    b = noise_terms(psi, model)
    psi_p = _add_noise(psi + p * dt * a, p * b, dw)
    out = _add_noise(psi + dt * a, noise_terms(psi_p, model), dw)
    return _renorm(out) if renormalize else out


def step_sse_stratonovich(psi, model, dw, dt, renormalize=False, tol=1e-14, max_iter=30):
    """Predictor-corrector midpoint step of the Stratonovich SSE.

    Euler predictor, then the corrector ``psi + f(midpoint)`` is iterated to
    its fixed point.  The converged step is the stochastic implicit midpoint
    rule, which keeps the norm exactly (up to ``tol``) because the
    Stratonovich vector field is skew.  ``max_iter=1`` gives the single-pass
    explicit scheme.
    """
    dw = np.asarray(dw)

    def field(y):
        return _add_noise(dt * deterministic_drift(y, model), noise_terms(y, model), dw)

    new = psi + field(psi)
    for _ in range(max_iter):
        nxt = psi + field(0.5 * (psi + new))
        delta = np.max(np.abs(nxt - new), initial=0.0)
        new = nxt
        if delta < tol:
            break
    return _renorm(new) if renormalize else new


# --------------------------------------------------------------------------
# Trajectories and ensembles
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryConfig:
    dt: float
    t_end: float
    seed: int = 0
    scheme: str = "ito_euler"
    renormalize_each_step: bool = None
    p: float = 0.5
    record_every: int = 1

    def __post_init__(self):
        scheme = _SCHEME_ALIASES.get(self.scheme, self.scheme)
        if scheme not in SCHEMES:
            raise InvalidParameterError(f"unknown scheme {self.scheme!r}")
        object.__setattr__(self, "scheme", scheme)
        if not self.dt > 0 or not self.t_end > 0:
            raise InvalidParameterError("dt and t_end must be positive")
        if self.renormalize_each_step is None:
            object.__setattr__(self, "renormalize_each_step", scheme != "stratonovich_heun")
        if self.record_every < 1:
            raise InvalidParameterError("record_every must be >= 1")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))


def trajectory_rng(seed, index):
    """Counter-based stream for trajectory ``index``; independent of execution order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(index),))))


def wiener_increments(seed, index, n_steps, n_channels, dt):
    """Noise realization of one trajectory, shape ``(n_steps, n_channels)``."""
    return np.sqrt(dt) * trajectory_rng(seed, index).standard_normal((n_steps, n_channels))


def _stepper(model, cfg):
    if cfg.scheme == "ito_euler":
        return lambda psi, dw: step_sse_ito(psi, model, dw, cfg.dt, cfg.renormalize_each_step)
    if cfg.scheme == "general_p":
        return lambda psi, dw: step_sse_general_p(psi, model, dw, cfg.dt, cfg.p, cfg.renormalize_each_step)
    return lambda psi, dw: step_sse_stratonovich(psi, model, dw, cfg.dt, cfg.renormalize_each_step)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    currents: np.ndarray


def simulate_trajectory(psi0, model, cfg, index=0):
    """One SSE trajectory with homodyne currents ``J_k = <X_k> + dW_k/dt``.

    States are recorded every ``cfg.record_every`` steps; currents at every step.
    """
    psi = check_ket(psi0, model.n, normalize=True)
    step = _stepper(model, cfg)
    n_steps = cfg.n_steps
    dws = wiener_increments(cfg.seed, index, n_steps, model.n_channels, cfg.dt)
    times, states = [0.0], [psi]
    currents = np.empty((n_steps, model.n_channels))
    for i in range(n_steps):
        currents[i] = quadrature_means(psi, model) + dws[i] / cfg.dt
        psi = step(psi, dws[i])
        if not np.all(np.isfinite(psi)):
            raise DivergenceError(f"trajectory diverged at step {i + 1}", step=i + 1)
        if (i + 1) % cfg.record_every == 0:
            times.append((i + 1) * cfg.dt)
            states.append(psi)
    return Trajectory(np.array(times), np.array(states), currents)


@dataclass
class EnsembleResult:
    times: np.ndarray
    rho_mean: np.ndarray
    states: np.ndarray = None
    n_traj: int = 0


def default_workers():
    env = os.environ.get("QPHASE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidParameterError(f"QPHASE_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _run_block(psi0, model, cfg, indices, keep_states, chunk=512):
    step = _stepper(model, cfg)
    b, m, n = len(indices), model.n_channels, model.n
    gens = [trajectory_rng(cfg.seed, i) for i in indices]
    psi = np.tile(psi0, (b, 1))
    n_steps = cfg.n_steps
    n_rec = n_steps // cfg.record_every + 1
    rho_sum = np.zeros((n_rec, n, n), complex)
    rho_sum[0] = b * np.outer(psi0, psi0.conj())
    states = np.empty((b, n_rec, n), complex) if keep_states else None
    if keep_states:
        states[:, 0] = psi
    rec = 1
    sqdt = np.sqrt(cfg.dt)
    for start in range(0, n_steps, chunk):
        c = min(chunk, n_steps - start)
        noise = sqdt * np.stack([g.standard_normal((c, m)) for g in gens], axis=1)
        for j in range(c):
            psi = step(psi, noise[j])
            i = start + j + 1
            if i % cfg.record_every == 0:
                unit = _renorm(psi)
                rho_sum[rec] = np.einsum("bi,bj->ij", unit, unit.conj())
                if keep_states:
                    states[:, rec] = unit
                rec += 1
        if not np.all(np.isfinite(psi)):
            raise DivergenceError(f"ensemble diverged before step {start + c}", step=start + c)
    return rho_sum, states


def simulate_ensemble(psi0, model, cfg, n_traj, keep_states=False, n_jobs=None, block_size=256):
    """Run ``n_traj`` independent SSE trajectories.

    Trajectories are processed in fixed blocks of ``block_size`` so results do
    not depend on ``n_jobs``; per-block sums are reduced in block order.
    """
    psi0 = check_ket(psi0, model.n, normalize=True)
    blocks = [range(s, min(s + block_size, n_traj)) for s in range(0, n_traj, block_size)]
    n_jobs = default_workers() if n_jobs is None else n_jobs
    if n_jobs > 1 and len(blocks) > 1:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(
            delayed(_run_block)(psi0, model, cfg, list(bl), keep_states) for bl in blocks
        )
    else:
        results = [_run_block(psi0, model, cfg, list(bl), keep_states) for bl in blocks]
    rho = sum(r[0] for r in results) / n_traj
    states = np.concatenate([r[1] for r in results]) if keep_states else None
    n_rec = rho.shape[0]
    times = np.arange(n_rec) * cfg.dt * cfg.record_every
    return EnsembleResult(times=times, rho_mean=rho, states=states, n_traj=n_traj)


# --------------------------------------------------------------------------
# Master equation
# --------------------------------------------------------------------------

def lindblad_rhs(rho, model):
    """``-i[H, ρ] + Σ_k (L ρ L† - ½{L†L, ρ})``."""
    k = _kernel(model)
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (k.n, k.n):
        raise InvalidParameterError(f"rho has shape {rho.shape}, expected {(k.n, k.n)}")
    heff = 1j * k.ito_lin  # H - i/2 Σ L†L
    out = -1j * (heff @ rho - rho @ heff.conj().T)
    for L in k.L:
        out += L @ rho @ L.conj().T
    return out


def evolve_master(rho0, model, t_end, dt):
    """RK4 integration of the Lindblad equation with a trace/Hermiticity watchdog."""
    rho = check_density(rho0, model.n)
    n_steps = int(round(t_end / dt))
    for i in range(n_steps):
        k1 = lindblad_rhs(rho, model)
        k2 = lindblad_rhs(rho + 0.5 * dt * k1, model)
        k3 = lindblad_rhs(rho + 0.5 * dt * k2, model)
        k4 = lindblad_rhs(rho + dt * k3, model)
        rho = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if (i + 1) % 64 == 0 or i + 1 == n_steps:
            _watchdog(rho, i + 1)
    return rho


def _watchdog(rho, step):
    if not np.all(np.isfinite(rho)):
        raise StabilityError(f"master equation diverged at step {step}")
    drift = abs(np.trace(rho) - 1.0)
    herm = np.max(np.abs(rho - rho.conj().T))
    if drift > 1e-6 or herm > 1e-6 or np.linalg.norm(rho) > 1.0 + 1e-6:
        raise StabilityError(f"master equation unstable at step {step} (trace drift {drift:.2e})")


def liouvillian(model):
    """Sparse column-stacking superoperator, ``vec(dρ/dt) = Lsup @ vec(ρ)``."""
    k = _kernel(model)
    n = k.n
    eye = sp.identity(n, dtype=complex, format="csr")
    heff = sp.csr_matrix(1j * k.ito_lin)
    sup = -1j * (sp.kron(eye, heff) - sp.kron(heff.conj(), eye))
    for L in k.L:
        Ls = sp.csr_matrix(L)
        sup = sup + sp.kron(Ls.conj(), Ls)
    return sup.tocsc()


def steady_state(model):
    """Null vector of the Liouvillian normalized to unit trace."""
    n = model.n
    sup = liouvillian(model).tolil()
    # replace one equation by the trace condition
    sup[0, :] = 0
    sup[0, [i * (n + 1) for i in range(n)]] = 1.0
    rhs = np.zeros(n * n, complex)
    rhs[0] = 1.0
    vec = spla.spsolve(sup.tocsc(), rhs)
    rho = vec.reshape(n, n, order="F")
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def trace_distance(rho1, rho2):
    ev = np.linalg.eigvalsh(np.asarray(rho1) - np.asarray(rho2))
    return 0.5 * float(np.sum(np.abs(ev)))
