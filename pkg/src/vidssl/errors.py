"""Shared exception types."""


class ConfigurationError(ValueError):
    """A hyperparameter or config key is out of its valid range."""


class DatasetStructureError(RuntimeError):
    """The dataset directory tree violates the expected layout."""


class DecodeError(RuntimeError):
    """A video file could not be decoded."""


class ValidationError(ValueError):
    """A runtime input violates a documented precondition."""


class GeometryError(ValueError):
    """Tensor shapes do not match the configured clip geometry."""


class NumericError(RuntimeError):
    """A non-finite value appeared where a finite one is required."""
