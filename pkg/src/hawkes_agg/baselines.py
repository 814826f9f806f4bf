"""Comparison estimators for binned data: binned Poisson likelihood and INAR(p)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from . import _kernels
from .core import BinnedCounts, ModelParams, stationary_intensity
from .exceptions import DegenerateDataError, NumericalError
from .likelihood import default_init, excitation_free_mask
from .optimize import FitResult, OptimizerSettings, maximize


def binned_objective(binned: BinnedCounts):
    counts = np.ascontiguousarray(binned.counts, dtype=float)

    def objective(params: ModelParams, order: int = 2):
        return _kernels.binned_loglik(
            counts, binned.delta,
            np.ascontiguousarray(params.nu, dtype=float),
            np.ascontiguousarray(params.alpha, dtype=float),
            np.ascontiguousarray(params.beta, dtype=float),
            order,
        )

    return objective


def binned_loglik(params: ModelParams, binned: BinnedCounts) -> float:
    """``sum_p sum_j N_j log(delta lam_j) - delta lam_j`` with ``lam_j`` the CIF at the left edge of bin ``j``."""
    return float(binned_objective(binned)(params, 0)[0])


def fit_binned_loglik(binned: BinnedCounts, init: ModelParams | None = None,
                      settings: OptimizerSettings | None = None,
                      fit_excitation: bool = True) -> FitResult:
    if binned.totals.sum() == 0:
        raise DegenerateDataError("all counts are zero")
    if init is None:
        init = default_init(binned.P, binned.totals, binned.horizon)
    stationary_intensity(init)
    return maximize(binned_objective(binned), init,
                    excitation_free_mask(binned.P, fit_excitation), settings)


@dataclass
class InarConfig:
    """``lag_order=None`` picks ``ceil(10 / delta)`` capped at 20.

    Grid values enter the exponential fit as positive only when their
    t-statistic exceeds ``min_t_stat``.
    """

    lag_order: int | None = None
    ridge: float = 1e-8
    min_t_stat: float = 3.0

    def resolve_lag(self, delta: float) -> int:
        if self.lag_order is not None:
            return int(self.lag_order)
        return int(min(20, math.ceil(10.0 / delta - 1e-12)))


def _exp_model(s, a, b):
    return a * np.exp(-b * s)


def _fit_exponential(lags, values, positive):
    """(alpha, beta, flag) for ``alpha * exp(-beta * lag)`` through one entry's grid values."""
    if positive.sum() >= 2:
        slope, intercept = np.polyfit(lags[positive], np.log(values[positive]), 1)
        return float(np.exp(intercept)), float(-slope), "loglinear"
    if positive.sum() == 1:
        k = int(np.flatnonzero(positive)[0])
        p0 = (values[k] * np.exp(lags[k]), 1.0)
        try:
            (a, b), _ = curve_fit(_exp_model, lags, values, p0=p0, maxfev=2000)
            return float(a), float(b), "nls"
        except (RuntimeError, ValueError):
            return float(values[k] * np.exp(lags[k])), 1.0, "nls_failed"
    return 0.0, float("nan"), "no_positive_grid"


def fit_inar(binned: BinnedCounts, config: InarConfig | None = None) -> FitResult:
    """Conditional least squares on lagged count vectors, then an exponential fit per kernel entry.

    Lag-``k`` coefficients divided by ``delta`` estimate the kernel at ``k * delta``,
    the intercept divided by ``delta`` estimates ``nu``. Estimates are returned
    as-is; ``valid`` is False when they break positivity.
    """
    config = config or InarConfig()
    if binned.totals.sum() == 0:
        raise DegenerateDataError("all counts are zero")
    K, P, delta = binned.K, binned.P, binned.delta
    p = config.resolve_lag(delta)
    if p < 1 or K <= p + 1:
        raise ValueError(f"need more bins ({K}) than lag order ({p}) + 1")
    X = binned.counts.astype(float)
    Y = X[p:]
    design = np.hstack([np.ones((K - p, 1))] + [X[p - k:K - k] for k in range(1, p + 1)])
    gram = design.T @ design
    penalty = np.full(gram.shape[0], config.ridge)
    penalty[0] = 0.0
    lhs = gram + np.diag(penalty)
    if np.linalg.cond(lhs) > 1e13:
        raise NumericalError("INAR design matrix is singular; increase ridge or reduce lag_order")
    try:
        coef = np.linalg.solve(lhs, design.T @ Y)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"INAR least squares failed ({exc}); increase ridge") from exc

    resid = Y - design @ coef
    dof = max(K - p - design.shape[1], 1)
    sigma2 = (resid ** 2).sum(axis=0) / dof
    cov_base = np.linalg.inv(lhs)
    se = np.sqrt(np.outer(np.diag(cov_base), sigma2))

    nu = coef[0] / delta
    # lag blocks: rows = source process, columns = receiving process
    A = np.stack([coef[1 + (k - 1) * P:1 + k * P].T for k in range(1, p + 1)])
    A_se = np.stack([se[1 + (k - 1) * P:1 + k * P].T for k in range(1, p + 1)])
    grid = A / delta
    lags = delta * np.arange(1, p + 1)

    alpha = np.zeros((P, P))
    beta = np.full((P, P), np.nan)
    flags = np.empty((P, P), dtype=object)
    for i in range(P):
        for j in range(P):
            vals = grid[:, i, j]
            positive = (vals > 0) & (A[:, i, j] > config.min_t_stat * A_se[:, i, j])
            alpha[i, j], beta[i, j], flags[i, j] = _fit_exponential(lags, vals, positive)
    fitted = np.isfinite(beta)
    fill = float(np.mean(beta[fitted])) if fitted.any() else 1.0 / delta
    beta[~fitted] = fill

    params = ModelParams(nu, alpha, beta, check=False)
    valid = params.is_valid
    return FitResult(
        params=params,
        loglik=float("nan"),
        iterations=1,
        converged=True,
        trajectory=[params.to_vector()],
        message="ok" if valid else "estimates violate positivity",
        valid=valid,
        details={"lag_order": p, "intercept": coef[0], "intercept_se": se[0], "coefficients": A,
                 "coefficient_se": A_se, "kernel_grid": grid, "entry_flags": flags},
    )
