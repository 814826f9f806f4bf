"""Multivariate exponential Hawkes model: containers, intensity, simulation, binning."""
from __future__ import annotations

from dataclasses import InitVar, dataclass, field
from functools import cached_property
import numpy as np

from . import _kernels
from .exceptions import StationarityError


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Baseline ``nu`` (P,), excitation ``alpha`` (P, P) and decay ``beta`` (P, P).

    Row index is the receiving process, column index the source process.
    Pass ``check=False`` to hold raw estimates that may break positivity
    (e.g. INAR fits); shapes are always validated.
    """

    nu: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    check: InitVar[bool] = True

    def __post_init__(self, check):
        nu = _frozen(np.atleast_1d(self.nu))
        P = nu.shape[0]
        alpha = _frozen(np.reshape(self.alpha, (P, P)) if np.size(self.alpha) == P * P else self.alpha)
        beta = _frozen(np.reshape(self.beta, (P, P)) if np.size(self.beta) == P * P else self.beta)
        if nu.ndim != 1 or P < 1 or alpha.shape != (P, P) or beta.shape != (P, P):
            raise ValueError(
                f"inconsistent shapes: nu {nu.shape}, alpha {alpha.shape}, beta {beta.shape}"
            )
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        if check and not self.is_valid:
            raise ValueError("require nu > 0, alpha >= 0, beta > 0 (all finite)")

    @property
    def P(self) -> int:
        return self.nu.shape[0]

    @property
    def is_valid(self) -> bool:
        arrs = (self.nu, self.alpha, self.beta)
        return (
            all(np.all(np.isfinite(a)) for a in arrs)
            and bool(np.all(self.nu > 0))
            and bool(np.all(self.alpha >= 0))
            and bool(np.all(self.beta > 0))
        )

    @property
    def is_stationary(self) -> bool:
        return spectral_radius(branching_ratio(self)) < 1.0

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.nu, self.alpha.ravel(), self.beta.ravel()])

    @classmethod
    def from_vector(cls, vec, P: int | None = None, check: bool = True) -> "ModelParams":
        vec = np.asarray(vec, dtype=float)
        if P is None:
            # n = P (1 + 2P)
            P = int(round((-1 + np.sqrt(1 + 8 * vec.size)) / 4))
        if vec.size != P * (1 + 2 * P):
            raise ValueError(f"vector of length {vec.size} does not match P={P}")
        return cls(vec[:P], vec[P:P + P * P].reshape(P, P), vec[P + P * P:].reshape(P, P), check=check)

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return self.P == other.P and np.array_equal(self.to_vector(), other.to_vector())

    def __repr__(self):
        return f"ModelParams(nu={self.nu.tolist()}, alpha={self.alpha.tolist()}, beta={self.beta.tolist()})"


def param_names(P: int) -> list[str]:
    """Labels in flattened order, 1-based: nu_1, alpha_1_1, ..., beta_P_P."""
    names = [f"nu_{i + 1}" for i in range(P)]
    names += [f"alpha_{i + 1}_{j + 1}" for i in range(P) for j in range(P)]
    names += [f"beta_{i + 1}_{j + 1}" for i in range(P) for j in range(P)]
    return names


@dataclass(frozen=True, eq=False)
class EventSequence:
    """Per-process sorted event times on the half-open window ``[0, horizon)``."""

    times: tuple
    horizon: float

    def __post_init__(self):
        T = float(self.horizon)
        if not (np.isfinite(T) and T > 0):
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        times = tuple(_frozen(np.asarray(t, dtype=float).ravel()) for t in self.times)
        if len(times) < 1:
            raise ValueError("need at least one process")
        for p, t in enumerate(times):
            if t.size and (t[0] < 0 or t[-1] >= T or not np.all(np.isfinite(t))):
                raise ValueError(f"process {p}: times must lie in [0, {T})")
            if t.size > 1 and np.any(np.diff(t) <= 0):
                raise ValueError(f"process {p}: times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "horizon", T)

    @property
    def P(self) -> int:
        return len(self.times)

    @property
    def counts(self) -> np.ndarray:
        return np.array([t.size for t in self.times], dtype=np.int64)

    @cached_property
    def _flat(self):
        offsets = np.zeros(self.P + 1, dtype=np.int64)
        offsets[1:] = np.cumsum(self.counts)
        flat = np.concatenate(self.times) if offsets[-1] else np.zeros(0)
        return np.ascontiguousarray(flat, dtype=float), offsets

    @classmethod
    def from_labels(cls, times, labels, P: int, horizon: float) -> "EventSequence":
        """Build from a pooled time array and 0-based process labels."""
        times = np.asarray(times, dtype=float)
        labels = np.asarray(labels, dtype=np.int64)
        order = np.argsort(times, kind="stable")
        times, labels = times[order], labels[order]
        return cls(tuple(times[labels == p] for p in range(P)), horizon)


@dataclass(frozen=True, eq=False)
class BinnedCounts:
    """``counts[j, p]`` events of process ``p`` in ``[j*delta, (j+1)*delta)``."""

    counts: np.ndarray
    delta: float

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim == 1:
            c = c[:, None]
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
            raise ValueError(f"counts must be a non-empty K x P matrix, got shape {c.shape}")
        if not np.all(np.isfinite(c)) or np.any(c < 0) or np.any(c != np.round(c)):
            raise ValueError("counts must be non-negative integers")
        d = float(self.delta)
        if not (np.isfinite(d) and d > 0):
            raise ValueError(f"delta must be positive, got {self.delta}")
        object.__setattr__(self, "counts", _frozen(c, dtype=np.int64))
        object.__setattr__(self, "delta", d)

    @property
    def K(self) -> int:
        return self.counts.shape[0]

    @property
    def P(self) -> int:
        return self.counts.shape[1]

    @property
    def horizon(self) -> float:
        return self.K * self.delta

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)


def _check_process(p, P):
    if not (0 <= int(p) < P) or int(p) != p:
        raise ValueError(f"process index {p} out of range for P={P}")
    return int(p)


def _check_time(t, T):
    if not (0 <= t <= T):
        raise ValueError(f"time {t} outside [0, {T}]")


def cif_eval(params: ModelParams, events: EventSequence, t: float, p: int) -> float:
    """Conditional intensity of process ``p`` (0-based) at ``t``; only events strictly before ``t`` count."""
    p = _check_process(p, params.P)
    _check_time(t, events.horizon)
    if events.P != params.P:
        raise ValueError("dimension mismatch between params and events")
    lam = params.nu[p]
    for m, tm in enumerate(events.times):
        past = tm[tm < t]
        if past.size:
            lam += params.alpha[p, m] * np.exp(-params.beta[p, m] * (t - past)).sum()
    return float(lam)


def compensator(params: ModelParams, events: EventSequence, t: float, p: int) -> float:
    """Integrated intensity of process ``p`` over ``[0, t]`` (closed form)."""
    p = _check_process(p, params.P)
    _check_time(t, events.horizon)
    if events.P != params.P:
        raise ValueError("dimension mismatch between params and events")
    val = params.nu[p] * t
    for m, tm in enumerate(events.times):
        past = tm[tm < t]
        if past.size:
            b = params.beta[p, m]
            val += params.alpha[p, m] / b * (-np.expm1(-b * (t - past))).sum()
    return float(val)


def branching_ratio(params: ModelParams) -> np.ndarray:
    """Element-wise ``alpha / beta``."""
    return params.alpha / params.beta


def spectral_radius(m) -> float:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    if m.shape[0] == 1:
        return float(abs(m[0, 0]))
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def check_stationary(params: ModelParams) -> float:
    rho = spectral_radius(branching_ratio(params))
    if not rho < 1.0:
        raise StationarityError(f"spectral radius of alpha/beta is {rho:.6g} >= 1")
    return rho


def stationary_intensity(params: ModelParams) -> np.ndarray:
    """Mean event rate per process, solving ``(I - gamma) lam = nu``."""
    check_stationary(params)
    gamma = branching_ratio(params)
    return np.linalg.solve(np.eye(params.P) - gamma, params.nu)


def simulate(params: ModelParams, horizon: float, seed=None) -> EventSequence:
    """Exact draw on ``[0, horizon)`` by thinning; deterministic given ``seed``.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator`` (consumed).
    """
    horizon = float(horizon)
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if np.any(params.nu < 0) or np.any(params.alpha < 0) or np.any(params.beta <= 0):
        raise ValueError("simulation needs nu >= 0, alpha >= 0, beta > 0")
    check_stationary(params)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    times, labels = _kernels.simulate_thinning(
        rng,
        np.ascontiguousarray(params.nu, dtype=float),
        np.ascontiguousarray(params.alpha, dtype=float),
        np.ascontiguousarray(params.beta, dtype=float),
        horizon,
    )
    return EventSequence(tuple(times[labels == p] for p in range(params.P)), horizon)


def n_bins(horizon: float, delta: float) -> int:
    """``horizon / delta`` as an exact integer, or ValueError."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    K = int(round(horizon / delta))
    if K < 1 or abs(K * delta - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"horizon {horizon} is not an integer multiple of delta {delta}")
    return K


def bin_index(t, delta: float, K: int) -> np.ndarray:
    return np.minimum(np.floor(np.asarray(t, dtype=float) / delta).astype(np.int64), K - 1)


def aggregate(events: EventSequence, delta: float) -> BinnedCounts:
    """Count events per half-open bin ``[j*delta, (j+1)*delta)``."""
    K = n_bins(events.horizon, delta)
    counts = np.zeros((K, events.P), dtype=np.int64)
    for p, t in enumerate(events.times):
        counts[:, p] = np.bincount(bin_index(t, delta, K), minlength=K)
    return BinnedCounts(counts, delta)


def superpose(binned: BinnedCounts) -> BinnedCounts:
    """Pool all processes into a single count column."""
    return BinnedCounts(binned.counts.sum(axis=1, keepdims=True), binned.delta)

