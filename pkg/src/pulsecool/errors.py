"""Exception types shared across the package."""


class PulsecoolError(Exception):
    """Base class for all package-specific errors."""


class InvalidDimensionError(PulsecoolError, ValueError):
    """A matrix or Fock-space dimension is out of range or inconsistent."""


class UnsupportedConfigurationError(PulsecoolError, ValueError):
    """The requested operation is not defined for these parameters."""


class TruncationError(PulsecoolError, RuntimeError):
    """Population leaked into the guard band of the truncated Fock space.

    Carries the measured leak so callers can report diagnostics instead of
    silently continuing with a corrupted state.
    """

    def __init__(self, message, leak=None, pulse_index=None):
        super().__init__(message)
        self.leak = leak
        self.pulse_index = pulse_index


class ConvergenceError(PulsecoolError, RuntimeError):
    """An iterative numerical procedure failed to reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
