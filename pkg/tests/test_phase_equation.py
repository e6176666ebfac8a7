import numpy as np
import pytest

from qphase.analysis import Histogram, compare_distributions
from qphase.exceptions import InvalidDimensionError, InvalidParameterError
from qphase.operators import make_generator_basis
from qphase.phase_equation import (
    PhaseSDE,
    add_perturbation,
    build_phase_sde,
    drift_ito,
    simulate_phase,
    spectral_derivative,
    stationary_distribution,
    step_phase,
)
from qphase.prc import prc_table

N_GRID = 64
THETA = 2 * np.pi * np.arange(N_GRID) / N_GRID


def _sde(omega, Y):
    Y = np.atleast_2d(Y)
    return PhaseSDE(omega=omega, theta=THETA, Y=Y, dY=spectral_derivative(Y))


@pytest.fixture(scope="module")
def bitflip_parts(bitflip_cycle):
    table = prc_table(bitflip_cycle, n_theta=64)
    return bitflip_cycle, table, build_phase_sde(bitflip_cycle, table)


def test_spectral_derivative_of_harmonics():
    f = np.stack([np.sin(3 * THETA), np.cos(THETA) + 0.2 * np.sin(2 * THETA)])
    df = np.stack([3 * np.cos(3 * THETA), -np.sin(THETA) + 0.4 * np.cos(2 * THETA)])
    assert np.allclose(spectral_derivative(f), df, atol=1e-12)


def test_grid_must_be_uniform():
    with pytest.raises(InvalidDimensionError):
        PhaseSDE(omega=1.0, theta=THETA ** 1.01, Y=np.zeros((1, N_GRID)), dY=np.zeros((1, N_GRID)))
    with pytest.raises(InvalidParameterError):
        _sde(1.0, np.full(N_GRID, np.nan))


def test_tables_interpolate_smoothly():
    sde = _sde(1.0, 0.3 * np.sin(THETA))
    th = np.array([0.123, 3.3, 6.2])
    Y, dY, pert = sde.tables(th)
    assert np.allclose(Y[:, 0], 0.3 * np.sin(th), atol=1e-5)
    assert np.allclose(dY[:, 0], 0.3 * np.cos(th), atol=1e-5)
    assert np.all(pert == 0)
    assert np.allclose(drift_ito(sde, th), 1.0 + 0.5 * 0.09 * np.sin(th) * np.cos(th), atol=1e-5)


def test_noise_free_rotation():
    sde = _sde(2.0, np.zeros(N_GRID))
    theta = np.array([0.0, 6.2])
    for scheme in ("stratonovich", "ito"):
        out = step_phase(sde, theta, np.zeros((2, 1)), 0.01, scheme)
        assert np.allclose(out, np.mod(theta + 0.02, 2 * np.pi))


def test_wrap_stays_in_range():
    sde = _sde(1.0, np.zeros(N_GRID))
    out = step_phase(sde, np.array([2 * np.pi - 1e-17]), np.zeros((1, 1)), 0.0)
    assert 0.0 <= out[0] < 2 * np.pi


def test_unknown_scheme():
    with pytest.raises(InvalidParameterError):
        step_phase(_sde(1.0, np.zeros(N_GRID)), np.zeros(1), np.zeros((1, 1)), 0.1, "rk45")


def test_stationary_density_inverse_noise_amplitude():
    """With ω = 0 the Stratonovich density is proportional to 1/|Y(θ)|."""
    Y = 1.0 + 0.5 * np.cos(THETA)
    sde = _sde(0.0, Y)
    n_bins = 32
    hist = stationary_distribution(sde, n_traj=2000, t_end=60.0, dt=0.01, seed=1, n_bins=n_bins, n_jobs=1)
    centers = Histogram.uniform(n_bins).centers
    exact = 1.0 / (1.0 + 0.5 * np.cos(centers))
    exact = Histogram(exact / (exact.sum() * 2 * np.pi / n_bins))
    assert compare_distributions(hist, exact) < 0.02
    ito = stationary_distribution(sde, n_traj=2000, t_end=60.0, dt=0.01, seed=1, n_bins=n_bins,
                                  scheme="ito", n_jobs=1)
    assert compare_distributions(ito, exact) < 0.02


def test_constant_noise_gives_uniform_density():
    sde = _sde(1.0, np.full(N_GRID, 0.5))
    hist = stationary_distribution(sde, n_traj=1000, seed=0, n_bins=16, n_jobs=1)
    assert compare_distributions(hist, Histogram.uniform(16)) < 0.02


def test_stationary_distribution_reproducible():
    sde = _sde(1.0, 0.4 * np.sin(THETA) + 0.5)
    kw = dict(n_traj=300, t_end=20.0, seed=5, n_bins=16, block_size=100)
    a = stationary_distribution(sde, n_jobs=1, **kw)
    b = stationary_distribution(sde, n_jobs=2, **kw)
    assert np.array_equal(a.density, b.density)
    assert a.total() == pytest.approx(1.0)


def test_simulate_phase_is_unwrapped():
    sde = _sde(1.0, np.full(N_GRID, 0.1))
    t, theta = simulate_phase(sde, 0.0, t_end=20.0, dt=0.01)
    assert theta[-1] == pytest.approx(20.0, abs=2.0)
    assert t.shape == theta.shape


def test_bitflip_sde_from_pipeline(bitflip_parts):
    lc, table, sde = bitflip_parts
    assert sde.n_channels == 1
    assert sde.Y.shape == (1, 64)
    assert np.all(np.isfinite(sde.Y))
    assert sde.omega == pytest.approx(lc.omega)
    # periodic: spectral derivative integrates to zero
    assert abs(sde.dY.sum()) < 1e-10


def test_sde_json_round_trip(bitflip_parts, tmp_path):
    sde = bitflip_parts[2]
    sde.to_json(tmp_path / "sde.json")
    again = PhaseSDE.from_json(tmp_path / "sde.json")
    assert np.array_equal(again.Y, sde.Y) and again.omega == sde.omega


def test_perturbation_drift(bitflip_parts):
    lc, table, sde = bitflip_parts
    basis = make_generator_basis(2)
    hp = basis[2]
    pert = add_perturbation(sde, hp, 0.01, table, basis)
    assert np.allclose(pert.perturb, 0.01 * table.Z[:, 2])
    twice = add_perturbation(pert, hp, 0.01, table, basis)
    assert np.allclose(twice.perturb, 0.02 * table.Z[:, 2])
    assert sde.perturb is None
