"""Input coercion for the estimator front end."""
from __future__ import annotations

import numbers

import numpy as np

from .core import BinnedCounts, EventSequence, ModelParams


def check_events(X, horizon=None) -> EventSequence:
    """Accept an EventSequence, or a list of per-process time arrays plus ``horizon``."""
    if isinstance(X, EventSequence):
        if horizon is not None and float(horizon) != X.horizon:
            raise ValueError(f"horizon {horizon} disagrees with the sequence horizon {X.horizon}")
        return X
    if isinstance(X, BinnedCounts):
        raise TypeError("this estimator needs exact event times, got binned counts")
    if horizon is None:
        raise ValueError("horizon is required when events are given as arrays")
    try:
        times = [np.sort(np.asarray(t, dtype=float).ravel()) for t in X]
    except TypeError as exc:
        raise TypeError("events must be an EventSequence or a list of time arrays") from exc
    return EventSequence(tuple(times), horizon)


def check_counts(X, delta=None) -> BinnedCounts:
    """Accept BinnedCounts, or a (K, P) / (K,) integer array plus ``delta``."""
    if isinstance(X, BinnedCounts):
        if delta is not None and float(delta) != X.delta:
            raise ValueError(f"delta {delta} disagrees with the counts' bin width {X.delta}")
        return X
    if isinstance(X, EventSequence):
        raise TypeError("this estimator needs binned counts; aggregate the events first")
    if delta is None:
        raise ValueError("delta is required when counts are given as an array")
    return BinnedCounts(np.asarray(X), delta)


def check_positive(name: str, value, allow_none: bool = False, integer: bool = False):
    if value is None and allow_none:
        return value
    kind = numbers.Integral if integer else numbers.Real
    if isinstance(value, bool) or not isinstance(value, kind) or not value > 0:
        raise ValueError(f"{name} must be a positive {'integer' if integer else 'number'}, got {value!r}")
    return value


def check_init(init, P: int):
    if init is None:
        return None
    if not isinstance(init, ModelParams):
        init = ModelParams.from_vector(np.asarray(init, dtype=float), P)
    if init.P != P:
        raise ValueError(f"init has P={init.P} but data have P={P}")
    return init
