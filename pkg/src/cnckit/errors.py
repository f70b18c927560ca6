"""Exception hierarchy.

The CLI maps these onto exit codes: ConfigError -> 1, DataError (and
subclasses) -> 2, anything else -> 3.
"""


class CncKitError(Exception):
    """Base class for all package errors."""


class ConfigError(CncKitError):
    """Invalid configuration, flags, or file references."""


class DataError(CncKitError):
    """Input data violates a documented contract."""


class LoadError(DataError):
    """A file could not be parsed under the declared schema."""


class GeometryError(DataError):
    """A polygon or layer fails validation."""


class IngestError(DataError):
    """Unrecoverable API client failure (bad response, retries exhausted)."""


class ConvergenceError(CncKitError):
    """An iterative solver did not reach its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual
