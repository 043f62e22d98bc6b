"""Exception types shared across the package."""


class ExtclustError(Exception):
    """Base class for all package-specific errors."""


class TooFewExceedancesError(ExtclustError):
    """Raised when a tail fit is attempted on too few exceedances."""


class FitConvergenceError(ExtclustError):
    """Raised when a numerical optimizer fails to converge.

    Carries the last iterate and its gradient norm for diagnosis.
    """

    def __init__(self, message, last_iterate=None, grad_norm=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.grad_norm = grad_norm


class OutOfSupportError(ExtclustError):
    """Raised when a value lies outside the support of a fitted model."""


class NoExceedancesError(ExtclustError):
    """Raised when an empirical cluster functional has no exceedances to count."""


class LevelBeyondSampleError(ExtclustError):
    """Raised when an empirical estimate is requested beyond the sample range."""


class IngestError(ExtclustError):
    """Raised on malformed input data files; carries offending row numbers."""

    def __init__(self, message, rows=None):
        super().__init__(message)
        self.rows = list(rows) if rows is not None else []


class ConfigError(ExtclustError):
    """Raised on invalid run configuration."""


class MissingArtifactError(ExtclustError):
    """Raised when a pipeline step needs an upstream artifact that is absent."""
