"""Replicated simulation study: simulate, bin, fit every method, summarise.

Replication ``r`` draws its data from ``SeedSequence(seed, spawn_key=(r,))``
so tables do not depend on worker count or scheduling.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import InarConfig, fit_binned_loglik, fit_inar
from .core import ModelParams, aggregate, param_names, simulate
from .exceptions import HawkesError
from .gof import transform_times
from .likelihood import fit_mle
from .mcem import MCEMConfig, mcem_fit

logger = logging.getLogger(__name__)

METHODS = ("mcem", "binned", "inar")
THREADS_ENV = "HAWKES_AGG_THREADS"


@dataclass
class StudyConfig:
    params: ModelParams
    horizon: float = 1000.0
    delta: float = 1.0
    reps: int = 10
    methods: tuple = METHODS
    trim: float = 0.05
    seed: int = 0
    mcem: MCEMConfig = field(default_factory=MCEMConfig)
    inar: InarConfig = field(default_factory=InarConfig)
    gof: bool = True

    def __post_init__(self):
        self.methods = tuple(self.methods)
        if self.reps < 2:
            raise ValueError("a study needs at least 2 replications")
        if not self.methods:
            raise ValueError("method list is empty")
        unknown = set(self.methods) - set(METHODS) - {"mle"}
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        if not 0 <= self.trim < 0.5:
            raise ValueError("trim fraction must lie in [0, 0.5)")

    @property
    def all_methods(self) -> tuple:
        """Requested methods plus the exact-data MLE reference, MLE first."""
        return ("mle",) + tuple(m for m in self.methods if m != "mle")


@dataclass
class StudyResult:
    config: StudyConfig
    truth: np.ndarray
    names: list
    estimates: dict          # method -> (reps, D) array, NaN rows for failures
    valid: dict              # method -> (reps,) bool
    failures: list           # (replication, method, message)
    gof: list                # (replication, method, process, n, ks)

    def summary(self, method: str) -> dict:
        return trimmed_summary(self.estimates[method], self.truth, self.config.trim)

    def failure_counts(self) -> dict:
        out = {m: 0 for m in self.estimates}
        for _, m, _ in self.failures:
            out[m] += 1
        return out


def trim_values(x, frac: float) -> np.ndarray:
    """Sorted finite values with ``floor(frac * n)`` dropped from each tail."""
    x = np.sort(np.asarray(x, dtype=float)[np.isfinite(x)])
    k = int(math.floor(frac * x.size + 1e-9))
    return x[k:x.size - k]


def trimmed_summary(est, truth, frac: float) -> dict:
    """Per-parameter trimmed mean, sd, bias, relative bias and MSE."""
    est = np.atleast_2d(np.asarray(est, dtype=float))
    truth = np.asarray(truth, dtype=float)
    keys = ("mean", "sd", "bias", "rel_bias", "mse", "n")
    out = {k: np.full(truth.size, np.nan) for k in keys}
    for d in range(truth.size):
        v = trim_values(est[:, d], frac)
        if v.size == 0:
            out["n"][d] = 0
            continue
        out["n"][d] = v.size
        out["mean"][d] = v.mean()
        out["sd"][d] = v.std(ddof=1) if v.size > 1 else np.nan
        out["bias"][d] = v.mean() - truth[d]
        out["rel_bias"][d] = out["bias"][d] / truth[d] if truth[d] != 0 else np.nan
        out["mse"][d] = np.mean((v - truth[d]) ** 2)
    return out


def dominance_count(result: StudyResult, method: str = "mcem", others=("binned", "inar")) -> int:
    """Number of parameters where ``method`` has strictly smaller trimmed MSE than every other."""
    mse = result.summary(method)["mse"]
    better = np.ones(mse.size, dtype=bool)
    for o in others:
        better &= mse < result.summary(o)["mse"]
    return int(better.sum())


def _fit(method: str, events, binned, cfg: StudyConfig, seed: int):
    if method == "mle":
        return fit_mle(events)
    if method == "binned":
        return fit_binned_loglik(binned)
    if method == "inar":
        return fit_inar(binned, cfg.inar)
    return mcem_fit(binned, replace(cfg.mcem, seed=seed))


def run_replication(cfg: StudyConfig, r: int) -> dict:
    ss = np.random.SeedSequence(cfg.seed, spawn_key=(r,))
    sim_seed, fit_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
    events = simulate(cfg.params, cfg.horizon, sim_seed)
    binned = aggregate(events, cfg.delta)
    out = {"estimates": {}, "valid": {}, "failures": [], "gof": []}
    D = cfg.params.to_vector().size
    for method in cfg.all_methods:
        try:
            res = _fit(method, events, binned, cfg, fit_seed)
        except (HawkesError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            out["estimates"][method] = np.full(D, np.nan)
            out["valid"][method] = False
            out["failures"].append((r, method, f"{type(exc).__name__}: {exc}"))
            continue
        out["estimates"][method] = res.params.to_vector()
        out["valid"][method] = bool(res.valid)
        if cfg.gof and res.params.is_valid:
            rep = transform_times(res.params, events)
            for p, ks in enumerate(rep.ks_stat):
                out["gof"].append((r, method, p + 1, len(rep.interarrivals[p]), ks))
    return out


def worker_count(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def run_study(cfg: StudyConfig, workers: int | None = None) -> StudyResult:
    workers = min(worker_count(workers), cfg.reps)
    if workers == 1:
        reps = [run_replication(cfg, r) for r in range(cfg.reps)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reps = list(pool.map(run_replication, [cfg] * cfg.reps, range(cfg.reps)))
    methods = cfg.all_methods
    estimates = {m: np.vstack([rep["estimates"][m] for rep in reps]) for m in methods}
    valid = {m: np.array([rep["valid"][m] for rep in reps]) for m in methods}
    failures = [f for rep in reps for f in rep["failures"]]
    gof = [g for rep in reps for g in rep["gof"]]
    for f in failures:
        logger.warning("replication %d, %s failed: %s", *f)
    return StudyResult(cfg, cfg.params.to_vector(), param_names(cfg.params.P),
                       estimates, valid, failures, gof)


def bias_table(result: StudyResult):
    """Columns: parameter, truth, then ``<method>_rel_bias`` per method."""
    methods = list(result.estimates)
    cols = ["parameter", "truth"] + [f"{m}_rel_bias" for m in methods]
    sums = {m: result.summary(m) for m in methods}
    rows = [[name, result.truth[d]] + [sums[m]["rel_bias"][d] for m in methods]
            for d, name in enumerate(result.names)]
    return cols, rows


def mean_sd_table(result: StudyResult):
    methods = list(result.estimates)
    cols = ["parameter", "truth"] + [c for m in methods for c in (f"{m}_mean", f"{m}_sd")]
    sums = {m: result.summary(m) for m in methods}
    rows = [[name, result.truth[d]] + [v for m in methods for v in (sums[m]["mean"][d], sums[m]["sd"][d])]
            for d, name in enumerate(result.names)]
    return cols, rows


def mse_table(result: StudyResult):
    methods = list(result.estimates)
    cols = ["parameter"] + [f"{m}_mse" for m in methods]
    sums = {m: result.summary(m) for m in methods}
    rows = [[name] + [sums[m]["mse"][d] for m in methods] for d, name in enumerate(result.names)]
    return cols, rows


def boxplot_rows(result: StudyResult):
    """Long format: replication, method, parameter, value, valid."""
    rows = []
    for m, est in result.estimates.items():
        for r in range(est.shape[0]):
            for d, name in enumerate(result.names):
                rows.append([r, m, name, est[r, d], int(result.valid[m][r])])
    return ["replication", "method", "parameter", "value", "valid"], rows


def replication_mse_rows(result: StudyResult):
    """Mean squared error over all parameters, per replication and method."""
    rows = []
    for m, est in result.estimates.items():
        for r in range(est.shape[0]):
            rows.append([r, m, float(np.mean((est[r] - result.truth) ** 2))])
    return ["replication", "method", "mse"], rows
