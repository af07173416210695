"""Exception hierarchy shared by every module."""


class IpchainError(Exception):
    """Base class for all package errors."""


class DomainError(IpchainError, ValueError):
    """An argument lies outside the domain of an operation."""


class ConfigurationError(IpchainError, ValueError):
    """A configuration value is missing, malformed or inconsistent.

    ``key`` names the offending configuration key path when known.
    """

    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class AccuracyError(IpchainError, ArithmeticError):
    """A numerical procedure failed to reach its requested tolerance."""


class NumericalBreakdown(IpchainError, ArithmeticError):
    """A recurrence or factorisation broke down.

    ``index`` identifies the failing step when the procedure is iterative.
    """

    def __init__(self, message, index=None):
        self.index = index
        super().__init__(message)


class GaugeError(IpchainError, ArithmeticError):
    """Restoring a Vidal tensor required inverting a vanishing singular value."""


class SimulationError(IpchainError, RuntimeError):
    """A trajectory aborted; ``step`` is the failing step and ``record`` the partial trajectory."""

    def __init__(self, message, step=None, record=None):
        self.step = step
        self.record = record
        super().__init__(message)
