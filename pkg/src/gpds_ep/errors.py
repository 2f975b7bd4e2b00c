"""Exception types shared across the package."""


class GPDSError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(GPDSError):
    """Operands have incompatible shapes."""


class NonPositiveDefinite(GPDSError):
    """A matrix that must be positive definite is not, even after jitter."""


class CholeskyFailure(NonPositiveDefinite):
    """A required Cholesky factorization failed after the jitter policy."""


class NonFinite(GPDSError):
    """A value that must be finite is NaN or infinite."""


class UpdateSkipped(GPDSError):
    """An EP factor update could not be applied and was skipped.

    Raised internally when a cavity is indefinite or an updated
    covariance is not positive definite after jitter; the smoother
    catches it, leaves the state untouched and counts the skip.
    """

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class DivergenceError(GPDSError):
    """A whole EP sweep failed: every attempted update was skipped."""


class SensorCoincidence(GPDSError):
    """A bearings sensor coincides with the observed point."""


class ConfigError(GPDSError):
    """An experiment or CLI configuration is invalid."""
