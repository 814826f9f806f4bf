"""Constrained Newton ascent for Hawkes objectives.

Free parameters are optimised in log coordinates (alpha floored at
``alpha_floor``), and any trial point whose branching matrix has spectral
radius at or above ``1 - rho_margin`` is rejected by the line search.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import ModelParams, branching_ratio, spectral_radius
from .exceptions import StationarityError

logger = logging.getLogger(__name__)

# objective(params, order) -> (value, grad, hess) in natural coordinates
Objective = Callable[[ModelParams, int], tuple]


@dataclass
class FitResult:
    params: ModelParams
    loglik: float
    iterations: int
    converged: bool
    trajectory: list = field(default_factory=list)
    message: str = ""
    valid: bool = True
    details: dict = field(default_factory=dict)


@dataclass
class OptimizerSettings:
    max_iter: int = 500
    grad_tol: float = 1e-6
    alpha_floor: float = 1e-10
    rho_margin: float = 1e-6
    max_step: float = 3.0
    max_halvings: int = 50


def _to_natural(phi, free, base, P, alpha_floor):
    vec = base.copy()
    vec[free] = np.exp(phi)
    a = slice(P, P + P * P)
    vec[a] = np.where(free[a], np.maximum(vec[a], alpha_floor), vec[a])
    return vec


def maximize(objective: Objective, init: ModelParams, free=None,
             settings: OptimizerSettings | None = None) -> FitResult:
    """Maximise ``objective`` from ``init`` over the entries flagged in ``free``."""
    s = settings or OptimizerSettings()
    P = init.P
    x0 = init.to_vector()
    if free is None:
        free = np.ones(x0.size, dtype=bool)
    free = np.asarray(free, dtype=bool)
    rho0 = spectral_radius(branching_ratio(init))
    if not rho0 < 1.0 - s.rho_margin:
        raise StationarityError(f"initial spectral radius {rho0:.6g} is not below 1")

    a = slice(P, P + P * P)
    start = x0.copy()
    start[a] = np.where(free[a], np.maximum(start[a], s.alpha_floor), start[a])
    phi = np.log(start[free])

    def evaluate(vec, order):
        params = ModelParams.from_vector(vec, P)
        return objective(params, order)

    def feasible(vec):
        rho = spectral_radius(vec[a].reshape(P, P) / vec[P + P * P:].reshape(P, P))
        return np.all(np.isfinite(vec)) and rho < 1.0 - s.rho_margin

    def _line_search(phi, direction, gf, value):
        slope = gf @ direction
        step = 1.0
        for _ in range(s.max_halvings):
            xt = _to_natural(phi + step * direction, free, x0, P, s.alpha_floor)
            if feasible(xt):
                vt = evaluate(xt, 0)[0]
                if np.isfinite(vt) and vt >= value + 1e-4 * step * slope:
                    return xt
            step *= 0.5
        return None

    x = _to_natural(phi, free, x0, P, s.alpha_floor)
    value, g, H = evaluate(x, 2)
    if not np.isfinite(value):
        raise ValueError("objective is not finite at the initial point")

    trajectory = [x.copy()]
    converged = False
    message = "iteration cap reached"
    it = 0
    for it in range(1, s.max_iter + 1):
        th = x[free]
        gf = th * g[free]
        if np.max(np.abs(gf), initial=0.0) < s.grad_tol:
            converged = True
            message = "gradient tolerance reached"
            it -= 1
            break
        Hf = th[:, None] * H[np.ix_(free, free)] * th[None, :] + np.diag(gf)
        direction, newton = _ascent_direction(Hf, gf)
        if newton and 0.5 * (gf @ direction) < 1e-13 * (1.0 + abs(value)):
            # Newton decrement below the float resolution of the objective
            converged = True
            message = "newton decrement tolerance reached"
            it -= 1
            break
        big = np.max(np.abs(direction))
        if big > s.max_step:
            direction *= s.max_step / big
        found = _line_search(phi, direction, gf, value)
        if found is None:
            # modified Newton direction failed: fall back to the plain gradient
            found = _line_search(phi, gf / max(1.0, np.max(np.abs(gf))), gf, value)
        if found is None:
            # predicted Newton gain below float resolution of the objective
            if 0.5 * abs(gf @ direction) < 1e-12 * (1.0 + abs(value)):
                converged = True
                message = "no further numerical improvement"
            elif spectral_radius(x[a].reshape(P, P) / x[P + P * P:].reshape(P, P)) > 1.0 - 1e3 * s.rho_margin:
                message = "stopped at the stationarity boundary"
            else:
                message = "line search failed"
            it -= 1
            break
        xt = found
        phi = np.log(xt[free])
        x = xt
        value, g, H = evaluate(x, 2)
        trajectory.append(x.copy())

    return FitResult(
        params=ModelParams.from_vector(x, P),
        loglik=float(value),
        iterations=it,
        converged=converged,
        trajectory=trajectory,
        message=message,
    )


def _ascent_direction(Hf, gf):
    """Newton direction, with eigenvalues of ``-H`` floored when it is not positive definite."""
    A = -0.5 * (Hf + Hf.T)
    try:
        c = np.linalg.cholesky(A)
        return np.linalg.solve(c.T, np.linalg.solve(c, gf)), True
    except np.linalg.LinAlgError:
        pass
    w, V = np.linalg.eigh(A)
    floor = 1e-8 * max(1.0, np.max(np.abs(w)))
    w = np.maximum(np.abs(w), floor)
    return V @ ((V.T @ gf) / w), False
