"""Limit cycles of the deterministic flow, their phase parameterization and
the isochron phase function.

The phase origin is the point of the cycle where the first channel
quadrature that varies along the cycle (usually ``<X_1>``) is largest, so
results do not depend on the sampling grid.  Overlaps are compared through ``|<a|b>|`` only; gauge fixing is used for
storage and interpolation.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from ._validation import check_ket, check_kets
from .dynamics import (
    _norm2,
    deterministic_drift,
    liouvillian,
    projective_speed,
    propagate,
    quadrature_means,
    rk4_step,
)
from .exceptions import (
    InvalidParameterError,
    NoCycleError,
    NotConvergedError,
    PeriodNotFoundError,
)
from .models import LindbladModel, model_config, model_from_config
from .operators import gauge_fix

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


def wrap_phase(theta):
    """Map to ``[0, 2π)``."""
    out = np.mod(theta, TWO_PI)
    return np.where(out >= TWO_PI, 0.0, out)


def wrap_difference(dtheta):
    """Map phase differences to ``(-π, π]``."""
    return np.pi - np.mod(np.pi - np.asarray(dtheta), TWO_PI)


def rate_scale(model):
    """Fastest frequency scale of the deterministic flow."""
    h = model.H - np.trace(model.H) / model.n * np.eye(model.n)
    scale = np.linalg.norm(h, 2) + sum(np.linalg.norm(L, 2) ** 2 for L in model.jumps)
    return max(scale, 1e-12)


def default_dt(model):
    """RK4 step resolving both the fastest rate and the rotation (>= 100 steps per period)."""
    return min(0.2 / rate_scale(model), period_guess(model) / 100.0)


def relaxation_time(model):
    """Inverse of the smallest nonzero decay rate of the Lindblad generator.

    Uses the dense Liouvillian spectrum for small models and the smallest
    channel rate otherwise.
    """
    if model.n <= 12 and model.n_channels:
        ev = np.linalg.eigvals(liouvillian(model).toarray())
        rates = -ev.real
        rates = rates[rates > 1e-9 * max(1.0, rates.max())]
        if rates.size:
            return 1.0 / rates.min()
    return 1.0 / min(model.rates, default=1.0)


def period_guess(model):
    """``2π`` over the smallest nonzero level spacing of ``H``."""
    ev = np.sort(np.linalg.eigvalsh(model.H))
    gaps = np.diff(ev)
    gaps = gaps[gaps > 1e-9 * max(1.0, np.abs(ev).max())]
    if gaps.size:
        return TWO_PI / gaps.min()
    return TWO_PI / model.gamma_max


def _refine_offsets(model, starts, targets, s0, h, dt, iters=30):
    """Offsets ``s`` maximizing ``|<φ(s)|target>|`` with ``φ(s)`` the flow from ``starts``.

    Secant iteration on the derivative of the squared overlap, batched over
    rows; ``s`` is confined to ``[-2h, 2h]``.  Returns ``(s, phi(s), overlap)``.
    """

    def deriv(s):
        phi = propagate(starts, model, s, dt)
        o = np.einsum("...i,...i->...", phi.conj(), targets)
        do = np.einsum("...i,...i->...", deterministic_drift(phi, model).conj(), targets)
        return (np.conj(o) * do).real, phi, o

    s_prev = np.asarray(s0, dtype=float)
    g_prev, _, _ = deriv(s_prev)
    s = s_prev + 1e-3 * h
    # Rows freeze individually once their step is negligible: at roundoff
    # level the secant denominator is noise and could throw them off again.
    done = np.zeros(s.shape, dtype=bool)
    for _ in range(iters):
        g, _, _ = deriv(s)
        denom = g - g_prev
        safe = (np.abs(denom) > 0) & ~done
        step = np.where(safe, g * (s - s_prev) / np.where(safe, denom, 1.0), 0.0)
        s_prev, g_prev = s, g
        s = np.clip(s - step, -2 * h, 2 * h)
        done |= np.abs(step) < 1e-12 * max(h, 1e-300)
        if done.all():
            break
    _, phi, o = deriv(s)
    return s, phi, np.abs(o)


@dataclass(frozen=True, eq=False)
class LimitCycle:
    """Periodic orbit of the deterministic flow sampled uniformly in phase.

    ``samples[i]`` is the gauge-fixed state at phase ``2π i / n_grid``,
    reached a time ``i T / n_grid`` after the phase origin.
    """

    model: LindbladModel = field(repr=False)
    period: float
    samples: np.ndarray = field(repr=False)
    dt: float
    origin: str = "max_x1"

    @property
    def omega(self):
        return TWO_PI / self.period

    @property
    def n_grid(self):
        return self.samples.shape[0]

    @property
    def theta(self):
        return TWO_PI * np.arange(self.n_grid) / self.n_grid

    @property
    def dtheta(self):
        return TWO_PI / self.n_grid

    def to_dict(self):
        return {
            "model": model_config(self.model),
            "operators": self.model.to_dict(),
            "period": self.period,
            "omega": self.omega,
            "dt": self.dt,
            "origin": self.origin,
            "n_grid": self.n_grid,
            "samples": {"re": self.samples.real.tolist(), "im": self.samples.imag.tolist()},
        }

    @classmethod
    def from_dict(cls, data, model=None):
        if model is None:
            model = (LindbladModel.from_dict(data["operators"]) if "operators" in data
                     else model_from_config(data["model"]))
        samples = np.asarray(data["samples"]["re"]) + 1j * np.asarray(data["samples"]["im"])
        return cls(model=model, period=float(data["period"]), samples=samples,
                   dt=float(data["dt"]), origin=data.get("origin", "max_x1"))


def find_limit_cycle(model, psi_init=None, t_relax=None, n_grid=512, dt=None,
                     dist_tol=1e-9, fixed_point_tol=None, seed=0):
    """Relax the deterministic flow onto its limit cycle and sample it.

    Relaxation proceeds in chunks for ``t_relax`` (default 20 relaxation
    times of the Lindblad generator).  Without an explicit ``t_relax`` the
    run is extended up to five-fold while the one-period distance is still
    shrinking geometrically towards ``dist_tol``.  After each chunk the overlap ``f(τ) = |<ψ(t-τ)|ψ(t)>|``
    is scanned for its first return peak; the period is refined and the cycle
    is accepted once one-period transverse distance drops below ``dist_tol``.

    Raises ``NoCycleError`` when the flow settles on a fixed point and
    ``PeriodNotFoundError`` when no return peak above ``1 - 1e-6`` appears.
    """
    if n_grid < 64:
        raise InvalidParameterError("n_grid must be >= 64")
    dt = float(dt or default_dt(model))
    if psi_init is None:
        rng = np.random.default_rng(seed)
        psi_init = rng.standard_normal(model.n) + 1j * rng.standard_normal(model.n)
    psi = check_ket(psi_init, model.n, normalize=True)
    t_max = float(t_relax) if t_relax is not None else 20.0 * relaxation_time(model)
    t_cap = t_max if t_relax is not None else 5.0 * t_max
    speed_scale = rate_scale(model)
    fixed_point_tol = fixed_point_tol if fixed_point_tol is not None else 1e-4 * speed_scale
    chunk = max(t_max / 20.0, 3.0 * period_guess(model))
    n_chunk = max(2, int(np.ceil(chunk / dt)))
    history = [psi]
    speeds = []
    t = 0.0
    found = None
    dists = []
    while t < t_cap:
        states = [history[-1]]
        for _ in range(n_chunk):
            states.append(rk4_step(states[-1], model, dt, renormalize=True))
        t += n_chunk * dt
        history = history[-n_chunk:] + states[1:]
        if not np.all(np.isfinite(history[-1])):
            raise NoCycleError("deterministic flow diverged during relaxation")
        speed = float(projective_speed(history[-1], model))
        speeds.append(speed)
        if speed < fixed_point_tol:
            raise NoCycleError(
                f"{model.name}: flow relaxed to a fixed point (speed {speed:.2e} at t={t:.4g})"
            )
        found = _detect_period(model, np.array(history), dt)
        if found is None:
            dists = []
            continue
        dists.append(found[1])
        if found[1] < dist_tol:
            break
        if t >= t_max and not _worth_extending(dists, dist_tol, t_cap - t, n_chunk * dt):
            break
    if found is None:
        if len(speeds) > 2 and np.all(np.diff(speeds[-5:]) < 0):
            raise NoCycleError(f"{model.name}: flow is relaxing to a fixed point (speed {speeds[-1]:.2e})")
        raise PeriodNotFoundError(f"{model.name}: no return peak above 1-1e-6 within t={t:.4g}")
    period, dist = found
    if dist >= dist_tol:
        logger.warning("%s: cycle accepted with one-period distance %.2e", model.name, dist)
    return _sample_cycle(model, history[-1], period, n_grid, dt)


def _worth_extending(dists, dist_tol, t_left, chunk):
    """Geometric extrapolation of the one-period distance: can it reach ``dist_tol`` in time?"""
    if len(dists) < 2:
        return True
    if not 0.0 < dists[-1] < dists[-2]:
        return False
    per_chunk = np.log(dists[-1] / dists[-2])
    needed = np.log(dist_tol / dists[-1]) / per_chunk * chunk
    return needed <= t_left


def _detect_period(model, history, dt):
    """Return ``(T, distance)`` from the newest state's first return, or None."""
    end = history[-1]
    f = np.abs(history[::-1] @ end.conj())
    dipped = np.nonzero(1.0 - f > 1e-8)[0]
    if dipped.size == 0:
        return None
    for j in range(dipped[0] + 1, len(f) - 1):
        if f[j] >= f[j - 1] and f[j] >= f[j + 1] and f[j] > 1.0 - 1e-3:
            # quadratic vertex as a starting offset (time runs backwards in j)
            denom = f[j - 1] - 2 * f[j] + f[j + 1]
            frac = 0.5 * (f[j - 1] - f[j + 1]) / denom if denom != 0 else 0.0
            start = history[::-1][j]
            s, phi, ov = _refine_offsets(model, start[None], end[None], np.array([frac * dt]), dt, dt)
            if ov[0] < 1.0 - 1e-6:
                return None
            period = j * dt - s[0]
            o = np.vdot(phi[0], end)
            dist = float(np.linalg.norm(end - (o / abs(o)) * phi[0]))
            return period, dist
    return None


def _generate(model, psi, period, n_grid, dt):
    h = period / n_grid
    out = np.empty((n_grid + 1, model.n), complex)
    out[0] = psi
    for i in range(n_grid):
        out[i + 1] = propagate(out[i], model, h, dt)
    return out


def _sample_cycle(model, on_cycle, period, n_grid, dt):
    raw = _generate(model, on_cycle, period, n_grid, dt)
    origin = raw[0]
    name = "first_state"
    # origin: maximum of the first channel quadrature that varies on the cycle
    xs = quadrature_means(raw[:-1], model) if model.n_channels else np.zeros((n_grid, 0))
    varying = [k for k in range(xs.shape[1]) if np.ptp(xs[:, k]) > 1e-9]
    if varying:
        k = varying[0]
        i = int(np.argmax(xs[:, k]))
        h = period / n_grid

        def neg_x(s):
            return -quadrature_means(propagate(raw[i], model, s, dt), model)[k]

        res = minimize_scalar(neg_x, bounds=(-h, h), method="bounded",
                              options={"xatol": 1e-12 * period})
        origin = propagate(raw[i], model, res.x, dt)
        name = f"max_x{k + 1}"
        raw = _generate(model, origin, period, n_grid, dt)
    closure = abs(np.vdot(raw[0], raw[-1]))
    if closure < 1.0 - 1e-8:
        logger.warning("%s: cycle closes with fidelity %.12f", model.name, closure)
    samples = gauge_fix(raw[:-1])
    samples.setflags(write=False)
    return LimitCycle(model=model, period=float(period), samples=samples, dt=dt, origin=name)


def sample_cycle(lc, theta):
    """State on the cycle at phase ``theta`` (scalar or array).

    Linear interpolation between the neighbouring samples after aligning
    their global phases, then renormalization and gauge fixing.  Grid phases
    return the stored sample exactly.
    """
    theta = np.asarray(theta, dtype=float)
    pos = wrap_phase(theta) / lc.dtheta
    i0 = np.floor(pos).astype(int) % lc.n_grid
    frac = pos - np.floor(pos)
    a = lc.samples[i0]
    b = lc.samples[(i0 + 1) % lc.n_grid]
    ov = np.einsum("...i,...i->...", b.conj(), a)
    b = b * (ov / np.abs(ov))[..., None]
    mixed = (1.0 - frac)[..., None] * a + frac[..., None] * b
    out = gauge_fix(mixed / np.sqrt(_norm2(mixed))[..., None])
    exact = frac == 0.0
    if np.any(exact):
        out = np.where(exact[..., None], a, out)
    return out


def match_phase(lc, states):
    """Phase of the cycle point closest (in overlap) to each state.

    Coarse search over the stored samples, then refinement by integrating the
    flow from the best sample.  Returns ``(theta, overlap)``.
    """
    states = check_kets(states, lc.model.n)
    flat = states.reshape(-1, lc.model.n)
    flat = flat / np.sqrt(_norm2(flat))[:, None]
    ov = np.abs(flat @ lc.samples.conj().T)
    i = np.argmax(ov, axis=1)
    n = lc.n_grid
    rows = np.arange(len(i))
    fm, f0, fp = ov[rows, (i - 1) % n], ov[rows, i], ov[rows, (i + 1) % n]
    denom = fm - 2 * f0 + fp
    h = lc.period / n
    frac = np.where(denom != 0, 0.5 * (fm - fp) / np.where(denom != 0, denom, 1.0), 0.0)
    s0 = np.clip(frac, -1.0, 1.0) * h
    s, _, overlap = _refine_offsets(lc.model, lc.samples[i], flat, s0, h, lc.dt)
    theta = wrap_phase(lc.theta[i] + lc.omega * s)
    return theta.reshape(states.shape[:-1]), overlap.reshape(states.shape[:-1])


def isochron_phase(lc, psi, n_periods=None, tol=1e-10, max_periods=200, min_fidelity=1.0 - 1e-4):
    """Asymptotic phase of ``psi`` under the deterministic flow.

    With ``n_periods`` given, integrate exactly ``n_periods * T`` and match the
    end state to the cycle.  Otherwise integrate period by period until the
    matched phase changes by less than ``tol`` between consecutive periods,
    extrapolating the geometric tail of the remaining changes.  If that does
    not happen within ``max_periods`` the extrapolated last estimate is
    returned, with a warning when its tail is still large.  Works on batches
    of kets along leading axes.
    """
    psi = check_kets(psi, lc.model.n)
    shape = psi.shape[:-1]
    cur = psi.reshape(-1, lc.model.n)
    cur = cur / np.sqrt(_norm2(cur))[:, None]
    # The first row is the phase origin.  Its matched phase records the
    # small per-period slip of the discrete flow, which is subtracted.
    cur = np.concatenate([lc.samples[:1], cur])

    def matched(states):
        th, fid = match_phase(lc, states)
        return wrap_phase(th[1:] - th[0]), fid[1:]

    if n_periods is not None:
        cur = propagate(cur, lc.model, n_periods * lc.period, lc.dt)
        theta, fid = matched(cur)
    else:
        # Rows leave the batch once their phase has settled; row 0 stays.
        # Near the cycle the phase changes between periods shrink
        # geometrically, so the tail of that series is extrapolated from
        # consecutive ratios and a row settles when that estimate stops
        # moving.
        n_rows = cur.shape[0] - 1
        theta = np.full(n_rows, np.nan)
        fid = np.ones(n_rows)
        active = np.arange(n_rows)
        near_gap = 1e-2 * (1.0 - min_fidelity)
        prev = prev_step = prev_est = last = None
        for _ in range(max_periods):
            cur = propagate(cur, lc.model, lc.period, lc.dt)
            new, f = matched(cur)
            theta[active], fid[active] = new, f
            if prev is None:
                prev = new
                continue
            step = wrap_difference(new - prev)
            tail = np.zeros_like(step)
            trusted = np.abs(step) < tol
            if prev_step is not None:
                with np.errstate(divide="ignore", invalid="ignore"):
                    ratio = step / prev_step
                    geometric = (ratio > 0.0) & (ratio < 0.99)
                    tail[geometric] = (step * ratio / (1.0 - ratio))[geometric]
                trusted |= geometric & (np.abs(tail) < 1e-3)
            est = new + tail
            # Some isochrons are nearly flat, so the phase can stall far from
            # the cycle; settling also requires closeness.
            settled = trusted & ((1.0 - f) < near_gap)
            if prev_est is not None:
                drift = np.abs(wrap_difference(est - prev_est))
                settled &= drift < tol
            else:
                drift = np.full_like(step, np.inf)
                settled &= np.abs(step) < tol
            theta[active[settled]] = wrap_phase(est[settled])
            moving = ~settled
            if not moving.any():
                break
            active = active[moving]
            cur = np.concatenate([cur[:1], cur[1:][moving]])
            prev, prev_step, prev_est = new[moving], step[moving], est[moving]
            last = (new[moving], est[moving], np.abs(step[moving]), drift[moving])
        else:
            # Oscillating convergence defeats the ratio extrapolation, so the
            # estimate is used only where it is steadier than the raw phase.
            if last is None:
                left = np.ones(len(active), dtype=bool)
            else:
                new, est, step_size, drift = last
                theta[active] = wrap_phase(np.where(drift < step_size, est, new))
                left = np.minimum(drift, step_size) > 1e3 * tol
            if left.any():
                logger.warning("isochron phase of %d state(s) still moving after %d periods",
                               int(left.sum()), max_periods)
    bad = fid < min_fidelity
    if np.any(bad):
        raise NotConvergedError(
            f"{int(bad.sum())} state(s) did not reach the cycle (worst fidelity {fid.min():.6f})",
            np.nonzero(bad)[0],
        )
    return theta.reshape(shape) if shape else float(theta[0])
