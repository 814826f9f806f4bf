"""Scikit-learn style front end.

Event-time estimators take an EventSequence (or a list of per-process time
arrays plus ``horizon``); count estimators take BinnedCounts (or a K x P count
array plus ``delta``). After ``fit`` every estimator exposes ``params_``,
``nu_``, ``alpha_``, ``beta_``, ``branching_ratio_``, ``loglik_``, ``n_iter_``,
``converged_`` and ``fit_result_``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .baselines import InarConfig, binned_loglik, fit_binned_loglik, fit_inar
from .core import branching_ratio, param_names
from .gof import transform_times
from .likelihood import fit_mle, loglik
from .mcem import MCEMConfig, mcem_fit
from .optimize import FitResult, OptimizerSettings
from .validation import check_counts, check_events, check_init, check_positive


class _HawkesEstimator(BaseEstimator):

    def _store(self, result: FitResult):
        p = result.params
        self.fit_result_ = result
        self.params_ = p
        self.n_processes_ = p.P
        self.nu_ = np.array(p.nu)
        self.alpha_ = np.array(p.alpha)
        self.beta_ = np.array(p.beta)
        self.branching_ratio_ = branching_ratio(p)
        self.loglik_ = result.loglik
        self.n_iter_ = result.iterations
        self.converged_ = result.converged
        self.valid_ = result.valid
        self.trajectory_ = np.array(result.trajectory)
        return self

    def get_estimates(self) -> dict:
        """Flattened estimates keyed by ``nu_1``, ``alpha_1_2``, ... (1-based)."""
        check_is_fitted(self, "params_")
        return dict(zip(param_names(self.n_processes_), self.params_.to_vector()))

    def transform(self, X, horizon=None):
        """Compensator-rescaled event times, one array per process."""
        check_is_fitted(self, "params_")
        return transform_times(self.params_, check_events(X, horizon)).transformed

    def _settings(self):
        return OptimizerSettings(max_iter=self.max_iter, grad_tol=self.grad_tol)


class ExactMLEHawkes(_HawkesEstimator):
    """Maximum likelihood on exact event times."""

    def __init__(self, init=None, max_iter=500, grad_tol=1e-6, fit_excitation=True):
        self.init = init
        self.max_iter = max_iter
        self.grad_tol = grad_tol
        self.fit_excitation = fit_excitation

    def fit(self, X, y=None, horizon=None):
        check_positive("max_iter", self.max_iter, integer=True)
        events = check_events(X, horizon)
        init = check_init(self.init, events.P)
        return self._store(fit_mle(events, init, self._settings(), self.fit_excitation))

    def score(self, X, y=None, horizon=None):
        check_is_fitted(self, "params_")
        return loglik(self.params_, check_events(X, horizon))


class _CountEstimator(_HawkesEstimator):

    def score(self, X, y=None):
        """Binned Poisson log-likelihood of counts under the fitted parameters."""
        check_is_fitted(self, "params_")
        if not self.params_.is_valid:
            return float("nan")
        return binned_loglik(self.params_, check_counts(X, self.delta))


class MCEMHawkes(_CountEstimator):
    """Monte Carlo EM on binned counts.

    ``n_samples`` proposals per E-step, each the best of ``n_allocations``
    random within-bin splits.
    """

    def __init__(self, delta=1.0, n_samples=20, n_allocations=10, tol=1e-3, max_iter=100,
                 random_state=None, init=None):
        self.delta = delta
        self.n_samples = n_samples
        self.n_allocations = n_allocations
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state
        self.init = init

    def fit(self, X, y=None):
        check_positive("delta", self.delta)
        binned = check_counts(X, self.delta)
        config = MCEMConfig(M=self.n_samples, m_tilde=self.n_allocations, tol=self.tol,
                            max_iter=self.max_iter, seed=self.random_state)
        return self._store(mcem_fit(binned, config, check_init(self.init, binned.P)))


class BinnedLikelihoodHawkes(_CountEstimator):
    """Poisson likelihood with the intensity frozen at each bin's left edge."""

    def __init__(self, delta=1.0, init=None, max_iter=500, grad_tol=1e-6, fit_excitation=True):
        self.delta = delta
        self.init = init
        self.max_iter = max_iter
        self.grad_tol = grad_tol
        self.fit_excitation = fit_excitation

    def fit(self, X, y=None):
        check_positive("delta", self.delta)
        binned = check_counts(X, self.delta)
        init = check_init(self.init, binned.P)
        return self._store(fit_binned_loglik(binned, init, self._settings(), self.fit_excitation))


class INARHawkes(_CountEstimator):
    """INAR(p) autoregression on counts with an exponential fit to the kernel grid.

    Estimates can break positivity; check ``valid_`` before using them.
    """

    def __init__(self, delta=1.0, lag_order=None, ridge=1e-8, min_t_stat=3.0):
        self.delta = delta
        self.lag_order = lag_order
        self.ridge = ridge
        self.min_t_stat = min_t_stat

    def fit(self, X, y=None):
        check_positive("delta", self.delta)
        check_positive("lag_order", self.lag_order, allow_none=True, integer=True)
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")
        binned = check_counts(X, self.delta)
        config = InarConfig(self.lag_order, self.ridge, self.min_t_stat)
        self._store(fit_inar(binned, config))
        self.kernel_grid_ = self.fit_result_.details["kernel_grid"]
        return self

    def transform(self, X, horizon=None):
        check_is_fitted(self, "params_")
        if not self.params_.is_valid:
            raise ValueError("INAR estimates are not valid Hawkes parameters")
        return super().transform(X, horizon)


ESTIMATORS = {
    "mle": ExactMLEHawkes,
    "mcem": MCEMHawkes,
    "binned": BinnedLikelihoodHawkes,
    "inar": INARHawkes,
}

