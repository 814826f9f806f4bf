"""Time-rescaling goodness of fit.

Event times mapped through their process's compensator form a unit-rate
Poisson process under a correctly specified model, so the gaps should look
Exp(1).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import EventSequence, ModelParams


@dataclass(frozen=True)
class GofReport:
    transformed: list
    interarrivals: list
    ks_stat: list
    qq_pairs: list

    def critical_value(self, p: int, level: float = 0.05) -> float:
        return critical_value(len(self.interarrivals[p]), level)


def critical_value(n: int, level: float = 0.05) -> float:
    """Asymptotic KS critical value, ``1.36 / sqrt(n)`` at the 5% level."""
    coef = {0.1: 1.22, 0.05: 1.36, 0.01: 1.63}[level]
    return coef / np.sqrt(n) if n > 0 else float("nan")


def compensator_at_events(params: ModelParams, events: EventSequence) -> list:
    """``Lambda_p(t)`` at every event of every process ``p``."""
    out = []
    for p in range(events.P):
        tp = events.times[p]
        lam = params.nu[p] * tp
        for m in range(events.P):
            tm = events.times[m]
            b = params.beta[p, m]
            R0 = _kernels.pair_recursions(tp, tm, b, 0)[0]
            n_before = np.searchsorted(tm, tp, side="left")
            lam = lam + params.alpha[p, m] / b * (n_before - R0)
        out.append(np.asarray(lam, dtype=float))
    return out


def ks_exponential(x) -> float:
    """Exact two-sided Kolmogorov-Smirnov distance between the sample and Exp(1)."""
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    if n == 0:
        return float("nan")
    F = -np.expm1(-x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def exp_quantiles(n: int) -> np.ndarray:
    return -np.log1p(-(np.arange(1, n + 1) - 0.5) / n)


def transform_times(params: ModelParams, events: EventSequence) -> GofReport:
    """Rescaled times, Exp(1) gap candidates, KS distances and QQ pairs per process.

    Gaps are measured from time zero, so the first gap is ``Lambda(t_1)``.
    Processes with fewer than two events are reported empty.
    """
    if params.P != events.P:
        raise ValueError("params and events disagree on P")
    transformed, gaps, ks, qq = [], [], [], []
    for lam in compensator_at_events(params, events):
        if lam.size < 2:
            transformed.append(np.zeros(0))
            gaps.append(np.zeros(0))
            ks.append(float("nan"))
            qq.append(np.zeros((0, 2)))
            continue
        d = np.diff(lam, prepend=0.0)
        transformed.append(lam)
        gaps.append(d)
        ks.append(ks_exponential(d))
        qq.append(np.column_stack([np.sort(d), exp_quantiles(d.size)]))
    return GofReport(transformed, gaps, ks, qq)
