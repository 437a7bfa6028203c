"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad configuration, malformed file, or violated precondition."""


class OrderingError(ValidationError):
    """A streaming append arrived with a timestamp older than the stored tail."""


class DimensionError(ValidationError):
    """Parameter or input dimensions are inconsistent."""


class StalenessError(RuntimeError):
    """Cached projections were produced under a different parameter version."""


class UndefinedMetricError(ValueError):
    """The requested metric is undefined for this input (e.g. single-class AUC)."""
