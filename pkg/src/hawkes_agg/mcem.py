"""Monte Carlo EM for binned multivariate Hawkes data.

Each E-step proposes latent event times that reproduce the observed counts
exactly: times for the pooled (superposed) process are drawn from a univariate
exponential Hawkes proposal, then split among the processes uniformly within
each bin. Proposals are importance weighted against the full multivariate
likelihood, and the M-step maximises the weighted log-likelihood.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln

from . import _kernels
from .core import (BinnedCounts, EventSequence, ModelParams, bin_index, branching_ratio,
                   spectral_radius, superpose)
from .exceptions import ConsistencyError, DegenerateDataError, NumericalError
from .likelihood import _call as _loglik_terms
from .optimize import FitResult, OptimizerSettings, maximize

logger = logging.getLogger(__name__)

GAMMA_CLAMP = 1.0 - 1e-6
BISECTION_TOL = 1e-10


@dataclass(frozen=True)
class SuperposedParams:
    nu_t: float
    alpha_t: float
    beta_t: float

    def __post_init__(self):
        if not (self.nu_t > 0 and self.alpha_t >= 0 and self.beta_t > 0):
            raise ValueError(f"invalid superposed parameters {self}")
        if not self.alpha_t / self.beta_t < 1:
            raise ValueError("superposed branching ratio must be below 1")

    @property
    def gamma_t(self) -> float:
        return self.alpha_t / self.beta_t


@dataclass(frozen=True, eq=False)
class ProposalSample:
    superposed_times: np.ndarray
    events: EventSequence
    logq_seq: float
    logq_alloc: float
    logp: float
    weight: float = float("nan")

    @property
    def logq(self) -> float:
        return self.logq_seq + self.logq_alloc


@dataclass
class MCEMConfig:
    """``M`` proposals per E-step, ``m_tilde`` allocations per proposal."""

    M: int = 20
    m_tilde: int = 10
    tol: float = 1e-3
    max_iter: int = 100
    seed: int | None = None
    # warm-started M-steps need not converge fully; any ascent keeps EM valid
    optimizer: OptimizerSettings = field(default_factory=lambda: OptimizerSettings(max_iter=100))

    def __post_init__(self):
        if self.M < 1 or self.m_tilde < 1 or self.max_iter < 1:
            raise ValueError("M, m_tilde and max_iter must be positive")
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")


def reparameterize(params: ModelParams, binned: BinnedCounts, totals=None) -> SuperposedParams:
    """Univariate parameters for the pooled process.

    The pooled baseline is the sum of baselines, the decay is the mean decay, and
    the branching ratio is chosen so the pooled stationary rate equals the
    observed pooled rate. ``totals`` overrides the observed per-process totals.
    """
    if params.P != binned.P:
        raise ValueError("params and counts disagree on P")
    totals = binned.totals if totals is None else np.asarray(totals, dtype=float)
    N = float(np.sum(totals))
    if not N > 0:
        raise DegenerateDataError("all counts are zero")
    nu_t = float(np.sum(params.nu))
    beta_t = float(np.mean(params.beta))
    gamma_t = 1.0 - binned.K * binned.delta * nu_t / N
    gamma_t = min(max(gamma_t, 0.0), GAMMA_CLAMP)
    return SuperposedParams(nu_t, beta_t * gamma_t, beta_t)


def sample_superposed_times(sp: SuperposedParams, superposed_counts: BinnedCounts, rng):
    """Consistent pooled times and the log-density of having drawn them."""
    counts = np.ascontiguousarray(np.asarray(superposed_counts.counts).sum(axis=1), dtype=np.int64)
    times, logq = _kernels.sample_superposed(
        rng, counts, superposed_counts.delta, sp.nu_t, sp.alpha_t, sp.beta_t, BISECTION_TOL)
    return times, float(logq)


def allocation_log_prob(binned: BinnedCounts) -> float:
    """Log-probability of any one uniform within-bin split of pooled points."""
    c = binned.counts
    return float(np.sum(gammaln(c + 1.0)) - np.sum(gammaln(c.sum(axis=1) + 1.0)))


def _check_superposed(times, binned: BinnedCounts):
    pooled = binned.counts.sum(axis=1)
    idx = bin_index(times, binned.delta, binned.K)
    if len(times) != pooled.sum() or np.any(np.bincount(idx, minlength=binned.K) != pooled):
        raise ConsistencyError("proposed times do not match the pooled bin counts")
    return idx


def allocate(times, binned: BinnedCounts, rng) -> tuple[EventSequence, float]:
    """Assign pooled points to processes, uniformly among count-matching splits per bin."""
    times = np.asarray(times, dtype=float)
    idx = _check_superposed(times, binned)
    # label template: for each bin, process labels repeated by their counts
    template = np.repeat(np.tile(np.arange(binned.P), binned.K), binned.counts.ravel())
    order = np.lexsort((rng.random(times.size), idx))
    labels = np.empty(times.size, dtype=np.int64)
    labels[order] = template
    events = EventSequence(tuple(times[labels == p] for p in range(binned.P)), binned.horizon)
    return events, allocation_log_prob(binned)


def best_allocation(times, binned: BinnedCounts, m_tilde: int, params: ModelParams, rng,
                    logq_seq: float = 0.0) -> ProposalSample:
    """Best of ``m_tilde`` random allocations by log-likelihood under ``params``."""
    if m_tilde < 1:
        raise ValueError("m_tilde must be at least 1")
    best = None
    for _ in range(m_tilde):
        ev, logq_alloc = allocate(times, binned, rng)
        logp = float(_loglik_terms(params, ev, 0)[0])
        if best is None or logp > best[2]:
            best = (ev, logq_alloc, logp)
    ev, logq_alloc, logp = best
    return ProposalSample(np.asarray(times), ev, logq_seq, logq_alloc, logp)


def importance_weights(logp, logq) -> np.ndarray:
    """Self-normalised weights ``exp(d - C) / sum exp(d - C)`` with ``d = logp - logq``, ``C = max d``."""
    d = np.asarray(logp, dtype=float) - np.asarray(logq, dtype=float)
    if d.ndim != 1 or d.size == 0:
        raise ValueError("expected non-empty 1-d log-weight vectors of equal length")
    if np.any(np.isnan(d)) or np.any(d == np.inf):
        raise ValueError("log-weights must be finite or -inf")
    C = np.max(d)
    if C == -np.inf:
        raise NumericalError("all importance log-weights are -inf")
    w = np.exp(d - C)
    return w / w.sum()


class WeightedObjective:
    """Weighted sum of exact log-likelihoods over proposals (the Monte Carlo Q function)."""

    min_weight = 1e-14

    def __init__(self, samples, weights):
        w = np.asarray(weights, dtype=float)
        w = w / w.sum()
        keep = w >= self.min_weight
        self.samples = [s for s, k in zip(samples, keep) if k]
        self.weights = w[keep] / w[keep].sum()

    def __call__(self, params: ModelParams, order: int = 2):
        value = 0.0
        grad = hess = 0.0
        for w, s in zip(self.weights, self.samples):
            v, g, h = _loglik_terms(params, s.events, order)
            value += w * v
            if order >= 1:
                grad = grad + w * g
            if order >= 2:
                hess = hess + w * h
        return value, grad, hess


def _sample_rng(seed, iteration: int, k: int):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(iteration, k)))


def e_step(binned: BinnedCounts, params: ModelParams, config: MCEMConfig, iteration: int = 0,
           seed=None):
    """Draw ``config.M`` weighted consistent proposals; return them with the Q function.

    Sample ``k`` uses its own stream derived from ``(seed, iteration, k)``.
    """
    seed = config.seed if seed is None else seed
    sp = reparameterize(params, binned)
    pooled = superpose(binned)
    samples = []
    for k in range(config.M):
        rng = _sample_rng(seed, iteration, k)
        times, logq_seq = sample_superposed_times(sp, pooled, rng)
        samples.append(best_allocation(times, binned, config.m_tilde, params, rng, logq_seq))
    w = importance_weights([s.logp for s in samples], [s.logq for s in samples])
    samples = [replace(s, weight=float(wk)) for s, wk in zip(samples, w)]
    return samples, WeightedObjective(samples, w)


def m_step(Q, current: ModelParams, settings: OptimizerSettings | None = None) -> ModelParams:
    """Maximise the weighted objective from ``current`` under positivity and stationarity."""
    try:
        res = maximize(Q, current, settings=settings)
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        raise NumericalError(f"M-step failed: {exc}") from exc
    if not np.isfinite(res.loglik):
        raise NumericalError(f"M-step produced a non-finite objective ({res.message})")
    if not res.converged:
        logger.debug("M-step stopped early: %s", res.message)
    return res.params


def init_params(P: int, rng, rho_max: float = 0.95) -> ModelParams:
    """Uniform random start: nu, alpha in (0.1, 1), beta in (1, 4), redrawn until rho < rho_max."""
    if P < 1:
        raise ValueError("P must be at least 1")
    while True:
        nu = rng.uniform(0.1, 1.0, P)
        alpha = rng.uniform(0.1, 1.0, (P, P))
        beta = rng.uniform(1.0, 4.0, (P, P))
        if spectral_radius(alpha / beta) < rho_max:
            return ModelParams(nu, alpha, beta)


def mcem_fit(binned: BinnedCounts, config: MCEMConfig | None = None,
             init: ModelParams | None = None) -> FitResult:
    """Iterate E and M steps until the parameter change norm drops below ``config.tol``."""
    config = config or MCEMConfig()
    if binned.totals.sum() == 0:
        raise DegenerateDataError("all counts are zero")
    seed = config.seed
    if seed is None:
        seed = int(np.random.SeedSequence().generate_state(1)[0])
    if init is None:
        init = init_params(binned.P, np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,))))
    theta = init
    trajectory = [theta.to_vector()]
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        _, Q = e_step(binned, theta, config, iteration=it, seed=seed)
        new = m_step(Q, theta, config.optimizer)
        change = float(np.linalg.norm(new.to_vector() - theta.to_vector()))
        theta = new
        trajectory.append(theta.to_vector())
        logger.debug("MCEM iteration %d: change %.3g", it, change)
        if change < config.tol:
            converged = True
            break
    final_Q = Q(theta, 0)[0]
    return FitResult(theta, float(final_Q), it, converged, trajectory,
                     "tolerance reached" if converged else "iteration cap reached")


def consistent_proposal(binned: BinnedCounts, params: ModelParams, seed=None,
                        m_tilde: int = 1) -> EventSequence:
    """One latent event sequence reproducing ``binned`` exactly, proposed under ``params``."""
    rng = np.random.default_rng(seed)
    sp = reparameterize(params, binned)
    times, logq_seq = sample_superposed_times(sp, superpose(binned), rng)
    return best_allocation(times, binned, m_tilde, params, rng, logq_seq).events
