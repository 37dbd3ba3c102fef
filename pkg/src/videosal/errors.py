"""Exception types shared across the package."""


class VideosalError(Exception):
    """Base class for package errors."""


class ShapeError(VideosalError):
    """Tensor dimensions do not match what an operation requires."""


class ConfigurationError(VideosalError):
    """A configuration value is invalid or inconsistent with the data."""


class DegenerateInputError(VideosalError):
    """An input is degenerate for the requested statistic (constant map,
    zero-sum distribution, empty fixation set, ...)."""


class GraphError(VideosalError):
    """Misuse of the autodiff graph (non-scalar backward, released graph)."""


class TrainingDiverged(VideosalError):
    """Training loss became non-finite; carries a diagnostic snapshot."""

    def __init__(self, message: str, snapshot: dict | None = None):
        super().__init__(message)
        self.snapshot = snapshot or {}


class FileFormatError(VideosalError):
    """An on-disk artifact is malformed; message carries the position."""
