"""Exception types shared across the package, mapped to CLI exit codes."""


class NovelmodError(Exception):
    """Base class for package errors."""


class ConfigError(NovelmodError):
    """Bad configuration: unknown keys, invalid values, incompatible checkpoints. Exit code 2."""


class DataError(NovelmodError):
    """Dataset layout or content problems; message names the offending path. Exit code 3."""


class NumericalAbort(NovelmodError):
    """A loss went non-finite during training. Exit code 4."""

    def __init__(self, message: str, step: int | None = None, batch_id: str | None = None):
        super().__init__(message)
        self.step = step
        self.batch_id = batch_id
