"""Catalog of Lindblad models with homodyne-monitored jump channels.

Rates are folded into the jump operators, ``L_k = sqrt(rate_k) O_k``, and
zero-rate channels are dropped at build time.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_operator, check_positive, is_hermitian
from .exceptions import InvalidDimensionError, InvalidParameterError
from .operators import (
    make_annihilation,
    operator_from_dict,
    operator_to_dict,
    pauli,
    spin_ladder,
)


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """Hamiltonian plus jump operators of ``dρ/dt = -i[H, ρ] + Σ D[L_k] ρ``.

    ``rates`` holds the rate prefactor of each retained channel so that
    ``jumps[k] = sqrt(rates[k]) * O_k``.
    """

    name: str
    H: np.ndarray = field(repr=False)
    jumps: tuple = field(repr=False)
    params: dict = field(default_factory=dict)
    rates: tuple = ()

    def __post_init__(self):
        H = check_operator(self.H)
        if not is_hermitian(H):
            raise InvalidParameterError(f"{self.name}: Hamiltonian is not Hermitian")
        jumps = tuple(check_operator(L, H.shape[0]) for L in self.jumps)
        for arr in (H, *jumps):
            arr.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "jumps", jumps)
        if self.rates and len(self.rates) != len(jumps):
            raise InvalidDimensionError("rates and jumps differ in length")

    @property
    def n(self):
        return self.H.shape[0]

    @property
    def n_channels(self):
        return len(self.jumps)

    @property
    def gamma_max(self):
        """Largest channel rate; 1.0 for models without channels."""
        return max(self.rates, default=1.0) or 1.0

    def stacked_jumps(self):
        if not self.jumps:
            return np.zeros((0, self.n, self.n), dtype=complex)
        return np.array(self.jumps)

    def with_hamiltonian(self, H, name=None):
        """Copy of the model with a different Hamiltonian."""
        return LindbladModel(
            name=name or self.name, H=H, jumps=self.jumps, params=dict(self.params), rates=self.rates
        )

    def without_channels(self):
        return LindbladModel(name=self.name, H=self.H, jumps=(), params=dict(self.params))

    def to_dict(self):
        return {
            "name": self.name,
            "params": self.params,
            "H": operator_to_dict(self.H),
            "jumps": [operator_to_dict(L) for L in self.jumps],
            "rates": list(self.rates),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            name=data["name"],
            H=operator_from_dict(data["H"]),
            jumps=tuple(operator_from_dict(d) for d in data["jumps"]),
            params=dict(data.get("params", {})),
            rates=tuple(data.get("rates", ())),
        )


def _channels(pairs):
    jumps, rates = [], []
    for rate, op in pairs:
        if rate > 0:
            jumps.append(np.sqrt(rate) * op)
            rates.append(float(rate))
    return tuple(jumps), tuple(rates)


def build_qvdp(delta=1.0, omega_drive=0.0, eta=0.0, lambda_sq=0.0, g1g=0.5, g1d=0.0,
               g2d=1.0, n_levels=6):
    """Quantum van der Pol oscillator in the frame rotating with the drive.

    ``H = -Δ a†a + iΩ(a† - a) + iη(a² e^{-iλ} - a†² e^{iλ})`` with channels
    one-photon gain ``g1g``, one-photon loss ``g1d`` and two-photon loss ``g2d``.
    """
    n_levels = int(n_levels)
    if n_levels < 3:
        raise InvalidDimensionError(f"n_levels must be >= 3, got {n_levels}")
    for name, val in (("g1g", g1g), ("g1d", g1d), ("g2d", g2d)):
        check_positive(name, val)
    a = make_annihilation(n_levels)
    ad = a.conj().T
    sq = np.exp(1j * lambda_sq)
    H = (
        -delta * ad @ a
        + 1j * omega_drive * (ad - a)
        + 1j * eta * (a @ a * np.conj(sq) - ad @ ad * sq)
    )
    H = 0.5 * (H + H.conj().T)
    jumps, rates = _channels([(g1g, ad), (g1d, a), (g2d, a @ a)])
    params = dict(delta=delta, omega_drive=omega_drive, eta=eta, lambda_sq=lambda_sq,
                  g1g=g1g, g1d=g1d, g2d=g2d, n_levels=n_levels)
    return LindbladModel("qvdp", H, jumps, params, rates)


def build_qubit(delta=3.0, gp=0.1, gm=0.05):
    """Two-level system with pumping ``S+`` and damping ``S-`` channels, ``H = Δ Sz``."""
    check_positive("gp", gp)
    check_positive("gm", gm)
    sp, sm, sz = spin_ladder(1)
    jumps, rates = _channels([(gp, sp), (gm, sm)])
    return LindbladModel("qubit", delta * sz, jumps, dict(delta=delta, gp=gp, gm=gm), rates)


def build_spin1(delta=2.0, gp=0.01, gm=0.005, np_occ=0.2, nm_occ=0.3):
    """Spin-1 oscillator with thermal pumping/damping channels."""
    for name, val in (("gp", gp), ("gm", gm), ("np_occ", np_occ), ("nm_occ", nm_occ)):
        check_positive(name, val)
    sp, sm, sz = spin_ladder(2)
    jumps, rates = _channels([
        (gp * (1 + np_occ), sp @ sz),
        (gm * (1 + nm_occ), sm @ sz),
        (gp * np_occ, sz @ sm),
        (gm * nm_occ, sz @ sp),
    ])
    params = dict(delta=delta, gp=gp, gm=gm, np_occ=np_occ, nm_occ=nm_occ)
    return LindbladModel("spin1", delta * sz, jumps, params, rates)


def build_spin32(delta=2 * np.pi, gp=1.0, gm=0.1):
    """Spin-3/2 oscillator, ``H = Δ Sz`` with channels ``S+Sz`` and ``S-Sz``."""
    check_positive("gp", gp)
    check_positive("gm", gm)
    sp, sm, sz = spin_ladder(3)
    jumps, rates = _channels([(gp, sp @ sz), (gm, sm @ sz)])
    return LindbladModel("spin32", delta * sz, jumps, dict(delta=delta, gp=gp, gm=gm), rates)


def build_bitflip_qubit(omega=1.0, gamma=0.1):
    """Qubit precessing under ``H = Ω σz`` with a monitored bit-flip channel ``σx``."""
    check_positive("gamma", gamma)
    sx, _, sz = pauli()
    jumps, rates = _channels([(gamma, sx)])
    return LindbladModel("bitflip", omega * sz, jumps, dict(omega=omega, gamma=gamma), rates)


def build_lambda_atom(omegas=(0.0, 1.0, 3.0), g1=1.0, g2=0.1, phi=np.pi / 4,
                      eta_phase=0.0, alpha=np.pi / 4):
    """Three-level Λ atom: decay out of ``|2⟩`` and a coherent channel between ``|0⟩, |1⟩``."""
    check_positive("g1", g1)
    check_positive("g2", g2)
    omegas = tuple(float(w) for w in omegas)
    if len(omegas) != 3:
        raise InvalidParameterError("omegas must have three entries")
    ket = np.eye(3, dtype=complex)

    def proj(i, j):
        return np.outer(ket[i], ket[j])

    l1 = np.cos(phi) * proj(0, 2) + np.exp(1j * eta_phase) * np.sin(phi) * proj(1, 2)
    l2 = np.cos(alpha) * proj(0, 1) + np.sin(alpha) * proj(1, 0)
    jumps, rates = _channels([(g1, l1), (g2, l2)])
    params = dict(omegas=list(omegas), g1=g1, g2=g2, phi=phi, eta_phase=eta_phase, alpha=alpha)
    return LindbladModel("lambda", np.diag(omegas).astype(complex), jumps, params, rates)


BUILDERS = {
    "qvdp": build_qvdp,
    "qubit": build_qubit,
    "spin1": build_spin1,
    "spin32": build_spin32,
    "bitflip": build_bitflip_qubit,
    "lambda": build_lambda_atom,
}

# Parameter sets of the reference figures; vdP rates are in units of g2d.
PRESETS = {
    "fig1a": ("qvdp", dict(delta=1.0, omega_drive=0.0, eta=0.0, g1g=0.1, g1d=0.0, g2d=1.0), 4),
    "fig1b": ("qvdp", dict(delta=1.0, omega_drive=0.0, eta=-0.2, g1g=0.1, g1d=0.0, g2d=1.0), 6),
    "fig2a": ("qvdp", dict(delta=1.0, omega_drive=0.0, eta=0.0, g1g=0.5, g1d=0.0, g2d=1.0), 6),
    "fig2b": ("qvdp", dict(delta=1.0, omega_drive=0.0, eta=0.0, g1g=0.1, g1d=0.0, g2d=1.0), 4),
    "fig3a": ("qubit", dict(delta=3.0, gp=0.1, gm=0.05), None),
    "fig3b": ("spin1", dict(delta=2.0, gp=0.01, gm=0.005, np_occ=0.2, nm_occ=0.3), None),
    "fig3c": ("spin32", dict(delta=2 * np.pi, gp=1.0, gm=0.1), None),
    "bitflip": ("bitflip", dict(omega=1.0, gamma=0.1), None),
    "lambda": ("lambda", dict(omegas=[0.0, 1.0, 3.0], g1=1.0, g2=0.1, phi=np.pi / 4,
                              eta_phase=0.0, alpha=np.pi / 4), None),
}


def build_model(name, params=None, n_levels=None):
    """Build a catalog model by builder name or preset name."""
    if name in PRESETS and params is None:
        builder, preset, preset_levels = PRESETS[name]
        params = dict(preset)
        n_levels = n_levels if n_levels is not None else preset_levels
        name = builder
    if name not in BUILDERS:
        raise InvalidParameterError(f"unknown model {name!r}; known: {sorted(BUILDERS)}")
    params = dict(params or {})
    if n_levels is not None:
        if name != "qvdp":
            raise InvalidParameterError(f"model {name!r} has a fixed dimension")
        params["n_levels"] = n_levels
    try:
        return BUILDERS[name](**params)
    except TypeError as exc:
        raise InvalidParameterError(str(exc)) from exc


def model_from_config(config):
    """Build from ``{"model": name, "params": {...}, "n_levels": int}``."""
    if isinstance(config, (str, bytes)):
        config = json.loads(config)
    if "model" not in config:
        raise InvalidParameterError("model config needs a 'model' key")
    params = config.get("params")
    return build_model(config["model"], params, config.get("n_levels"))


def model_config(model):
    params = dict(model.params)
    n_levels = params.pop("n_levels", None)
    config = {"model": model.name, "params": params}
    if n_levels is not None:
        config["n_levels"] = n_levels
    return config
