"""Exception hierarchy.

Every error the toolkit raises derives from :class:`SSEPError`, so callers can
catch the whole family at once. Subclasses also inherit from the closest
builtin (``ValueError``, ``RuntimeError``) to play well with generic handlers.
"""


class SSEPError(Exception):
    """Base class for all toolkit errors."""


class InvalidParametersError(SSEPError, ValueError):
    pass


class BlockTooLargeError(SSEPError, ValueError):
    pass


class HorizonOverflowError(SSEPError, RuntimeError):
    """Predicted event count exceeds the configured budget."""


class OutOfHorizonError(SSEPError, ValueError):
    pass


class DimensionMismatchError(SSEPError, ValueError):
    pass


class DegreeOneViolationError(SSEPError, ValueError):
    """A local function does not satisfy phi_f(rho*) = 0, phi_f'(rho*) != 0."""


class MissingGreenTableError(SSEPError, ValueError):
    pass


class StateSpaceTooLargeError(SSEPError, ValueError):
    pass


class AbsoluteContinuityError(SSEPError, ValueError):
    pass


class LatticeTooLargeError(SSEPError, ValueError):
    pass


class FlowInfeasibleError(SSEPError, ValueError):
    pass


class TruncationInsufficientError(SSEPError, ValueError):
    pass


class InconsistentInputError(SSEPError, ValueError):
    pass


class NonconformingGridError(SSEPError, ValueError):
    pass


class OptimizationInfeasibleError(SSEPError, RuntimeError):
    pass


class UnknownPresetError(SSEPError, KeyError):
    pass


class BudgetExceededError(SSEPError, RuntimeError):
    pass


class InsufficientSamplesError(SSEPError, ValueError):
    pass


class ConfigError(SSEPError, ValueError):
    pass
