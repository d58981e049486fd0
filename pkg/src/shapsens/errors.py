"""Exception hierarchy shared across the package."""


class SensitivityError(Exception):
    """Base class for all errors raised by this package."""


class DistributionError(SensitivityError):
    """A joint distribution is invalid (non-symmetric, non-positive-definite,
    dimension mismatch, or a singular conditioning block)."""


class DomainError(SensitivityError):
    """A conditioning or transform value lies outside a marginal's support."""


class ModelEvaluationError(SensitivityError):
    """A model produced an unusable output value."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class ExternalModelError(SensitivityError):
    """An external model process failed; carries the captured stderr."""

    def __init__(self, message, stderr=""):
        super().__init__(message)
        self.stderr = stderr


class DegenerateOutputError(SensitivityError):
    """The model output variance is (numerically) zero; indices are undefined."""


class SizeError(SensitivityError):
    """A requested computation exceeds the supported problem size."""


class FitError(SensitivityError):
    """Surrogate fitting failed (all restarts diverged or data unusable)."""


class IllConditionedError(FitError):
    """A covariance factorization failed even after adding the nugget."""


class ConfigError(SensitivityError):
    """A run configuration is invalid; the message names the offending key."""
