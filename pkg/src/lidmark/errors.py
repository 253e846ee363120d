"""Exception types shared across the toolkit."""


class LidmarkError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatchError(LidmarkError):
    """A vector, point set or tensor has the wrong number of elements."""


class DomainBoundsError(LidmarkError):
    """A value lies outside its documented legal range."""


class SidecarFormatError(LidmarkError):
    """A landmark sidecar record is malformed.

    Carries the 1-based line number of the offending record when known.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CheckpointFormatError(LidmarkError):
    """A checkpoint file is corrupt or has an unsupported layout."""


class ConfigError(LidmarkError):
    """A run-configuration file or flag set is invalid."""


class TrainingDivergedError(LidmarkError):
    """A loss became non-finite during optimization."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step
