"""Estimator-style front end: fit a phase reduction, transform kets to phases."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_kets
from .exceptions import InvalidParameterError
from .limit_cycle import find_limit_cycle, isochron_phase
from .models import LindbladModel, build_model
from .operators import make_generator_basis
from .phase_equation import add_perturbation, build_phase_sde, stationary_distribution
from .prc import prc_table


class QuantumPhaseReduction(TransformerMixin, BaseEstimator):
    """Phase reduction of a monitored quantum limit cycle.

    ``fit`` finds the limit cycle of ``model`` (a catalog name or a
    :class:`LindbladModel`), tabulates the generator PRCs and builds the phase
    SDE.  ``transform`` maps kets of shape ``(n_samples, N)`` to their
    asymptotic phases.  ``X`` passed to ``fit`` is ignored; the model defines
    the system.

    Fitted attributes: ``model_``, ``limit_cycle_``, ``prc_table_``,
    ``phase_sde_``, ``omega_``, ``period_``.
    """

    def __init__(self, model="fig2a", n_grid=512, n_theta=128, eps=1e-4, dt=None,
                 t_relax=None, n_periods=None, perturbation=None, perturbation_eps=0.0,
                 seed=0, n_jobs=1):
        self.model = model
        self.n_grid = n_grid
        self.n_theta = n_theta
        self.eps = eps
        self.dt = dt
        self.t_relax = t_relax
        self.n_periods = n_periods
        self.perturbation = perturbation
        self.perturbation_eps = perturbation_eps
        self.seed = seed
        self.n_jobs = n_jobs

    def _resolve_model(self):
        if isinstance(self.model, LindbladModel):
            return self.model
        if isinstance(self.model, str):
            return build_model(self.model)
        raise InvalidParameterError("model must be a catalog name or a LindbladModel")

    def fit(self, X=None, y=None):
        model = self._resolve_model()
        basis = make_generator_basis(model.n)
        lc = find_limit_cycle(model, n_grid=self.n_grid, dt=self.dt, t_relax=self.t_relax,
                              seed=self.seed)
        table = prc_table(lc, basis, n_theta=self.n_theta, eps=self.eps,
                          n_periods=self.n_periods, n_jobs=self.n_jobs)
        sde = build_phase_sde(lc, table, basis)
        if self.perturbation is not None and self.perturbation_eps:
            sde = add_perturbation(sde, self.perturbation, self.perturbation_eps, table, basis)
        self.model_ = model
        self.basis_ = basis
        self.limit_cycle_ = lc
        self.prc_table_ = table
        self.phase_sde_ = sde
        self.omega_ = lc.omega
        self.period_ = lc.period
        self.n_features_in_ = model.n
        return self

    def transform(self, X):
        """Asymptotic phases, shape ``(n_samples, 1)``."""
        check_is_fitted(self, "limit_cycle_")
        X = check_kets(np.atleast_2d(X), self.model_.n)
        theta = isochron_phase(self.limit_cycle_, X, n_periods=self.n_periods)
        return np.asarray(theta).reshape(-1, 1)

    def stationary_distribution(self, n_traj=10_000, t_end=None, dt=None, n_bins=64,
                                scheme="stratonovich"):
        check_is_fitted(self, "phase_sde_")
        return stationary_distribution(self.phase_sde_, n_traj=n_traj, t_end=t_end, dt=dt,
                                       seed=self.seed, n_bins=n_bins, scheme=scheme,
                                       n_jobs=self.n_jobs)
