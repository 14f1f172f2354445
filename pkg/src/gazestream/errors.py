"""Exception types shared across the engine."""


class GazeStreamError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(GazeStreamError):
    """Invalid or incomplete configuration (column map, geometry, session config)."""


class MalformedStreamError(GazeStreamError):
    """Sample stream violates ordering guarantees (non-increasing timestamps)."""


class IngestionError(GazeStreamError):
    """Input file could not be ingested (bad-row budget exceeded, etc.)."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class EmptyStreamError(IngestionError):
    """Input file produced no samples."""


class SinkClosed(GazeStreamError):
    """Raised by a replay sink to signal it no longer accepts samples."""
