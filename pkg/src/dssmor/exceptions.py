"""Exception hierarchy for the reduction toolkit."""


class DssError(ValueError):
    """Base class for all errors raised by :mod:`dssmor`."""


class DimensionError(DssError):
    """Array shapes are inconsistent or a size is out of range."""


class NotStableError(DssError):
    """A model that must be stable has an eigenvalue with ``Re >= 0``."""


class DegenerateInputError(DssError):
    """An input-map entry is zero, so the mode cannot be normalised."""


class ConfigurationError(DssError):
    """A required setting (e.g. the sampling time) is missing or invalid."""


class SingularStateError(DssError):
    """A zero eigenvalue makes the zero-order-hold input map undefined."""


class DivergentIntegralError(DssError):
    """An infinite-horizon integral does not converge."""


class StructureError(DssError):
    """The model does not have the exponential (DSS_EXP) structure."""


class ConsistencyError(DssError):
    """A Gramian set was computed for a different model pair or horizon."""


class StabilityMarginError(DssError):
    """A finite-difference perturbation would leave the stable region."""


class NumericError(DssError):
    """A non-finite value was produced where a finite one is required."""
