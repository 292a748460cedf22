"""Exception types shared across the package."""


class TemperviError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(TemperviError):
    """Inconsistent or incomplete run configuration (bad grids, missing tables, ...)."""


class InvalidStateError(TemperviError):
    """A variational state left the model's valid natural-parameter domain."""


class EstimationError(TemperviError):
    """A Monte Carlo estimator failed to produce a finite estimate."""


class EvaluationError(TemperviError):
    """Held-out evaluation could not be carried out (e.g. no held-out words)."""


class CorpusFormatError(TemperviError):
    """Malformed corpus file; carries the offending line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
