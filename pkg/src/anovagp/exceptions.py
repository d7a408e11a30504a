"""Exception types shared across the package."""


class AnovaGpError(Exception):
    """Base class for all package-specific errors."""


class DegenerateReferenceError(AnovaGpError):
    """Raised when a contribution weight would divide by a zero reference norm."""


class IllConditionedKernelError(AnovaGpError):
    """Raised when a kernel matrix is not positive definite (Cholesky failure)."""


class TrainingFailedError(AnovaGpError):
    """Raised when every hyperparameter optimization restart fails."""


class SimulatorError(AnovaGpError):
    """Raised when a simulator evaluation fails.

    Carries the offending input point in ``point`` when available.
    """

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class UndefinedIndicatorError(AnovaGpError):
    """Raised when the variance indicator is requested for a rank-zero term."""


class ConfigError(AnovaGpError):
    """Raised for invalid experiment configurations."""
