"""Exception hierarchy shared by all modules."""


class GPError(Exception):
    """Base class for every error raised by :mod:`asmfgp`."""


class DimensionMismatchError(GPError, ValueError):
    pass


class NonFiniteInputError(GPError, ValueError):
    pass


class InvalidSpecError(GPError, ValueError):
    pass


class FactorizationError(GPError, ArithmeticError):
    """Cholesky factorization failed even after jitter escalation."""


class DegenerateDataError(GPError, ValueError):
    """The response carries no variation (e.g. identically zero or constant)."""


class OptimizationError(GPError, RuntimeError):
    """Every start of a multi-start optimization failed.

    The last underlying failure is available as ``__cause__`` and
    ``last_error``.
    """

    def __init__(self, message, last_error=None):
        super().__init__(message)
        self.last_error = last_error


class DegenerateEigenvalueError(GPError, ArithmeticError):
    pass


class ModeError(GPError, ValueError):
    """A multi-fidelity predictor was requested outside its validity domain."""


class ConfigError(GPError, ValueError):
    pass


class PipelineError(GPError, RuntimeError):
    """Failure inside the multi-fidelity construction, tagged by step number."""

    def __init__(self, step, message):
        super().__init__(f"step {step}: {message}")
        self.step = step


class DataFormatError(GPError, ValueError):
    """A dataset file could not be parsed into a numeric table."""
