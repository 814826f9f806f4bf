"""Exception types raised by the package."""


class HawkesError(Exception):
    """Base class for all package errors."""


class StationarityError(HawkesError, ValueError):
    """Parameters violate the spectral-radius condition."""


class DegenerateDataError(HawkesError, ValueError):
    """Observed data carry no information (e.g. all-zero counts)."""


class ConsistencyError(HawkesError, ValueError):
    """Latent times do not reproduce the observed bin counts."""


class DataFormatError(HawkesError, ValueError):
    """Malformed input file."""


class NumericalError(HawkesError, RuntimeError):
    """Optimizer or linear-algebra failure."""
