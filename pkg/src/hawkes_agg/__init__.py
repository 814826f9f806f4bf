"""Estimation of multivariate exponential Hawkes processes from binned event counts."""
__version__ = "0.1.0"

from .baselines import InarConfig, fit_binned_loglik, fit_inar
from .core import (BinnedCounts, EventSequence, ModelParams, aggregate, branching_ratio,
                   cif_eval, compensator, simulate, spectral_radius, stationary_intensity)
from .estimators import BinnedLikelihoodHawkes, ExactMLEHawkes, INARHawkes, MCEMHawkes
from .exceptions import (ConsistencyError, DataFormatError, DegenerateDataError, HawkesError,
                         NumericalError, StationarityError)
from .gof import GofReport, transform_times
from .likelihood import fit_mle, loglik
from .mcem import MCEMConfig, mcem_fit
from .optimize import FitResult

__all__ = [
    "BinnedCounts", "BinnedLikelihoodHawkes", "ConsistencyError", "DataFormatError",
    "DegenerateDataError", "EventSequence", "ExactMLEHawkes", "FitResult", "GofReport",
    "HawkesError", "INARHawkes", "InarConfig", "MCEMConfig", "MCEMHawkes", "ModelParams",
    "NumericalError", "StationarityError", "aggregate", "branching_ratio", "cif_eval",
    "compensator", "fit_binned_loglik", "fit_inar", "fit_mle", "loglik", "mcem_fit",
    "simulate", "spectral_radius", "stationary_intensity", "transform_times",
]
