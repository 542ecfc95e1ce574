"""Exception hierarchy.

The CLI maps ``ConfigError`` to exit code 1 and ``DataError`` to exit code 2;
anything else escaping a command is an internal error (exit 3).
"""


class FairPoiError(Exception):
    """Base class for all library errors."""


class ConfigError(FairPoiError, ValueError):
    """Invalid parameters or configuration."""


class DataError(FairPoiError):
    """Input data is malformed or cannot support the requested operation."""


class ParseError(DataError):
    def __init__(self, path, line: int, column: int, message: str):
        self.path, self.line, self.column = str(path), line, column
        super().__init__(f"{path}:{line}: column {column}: {message}")


class UnknownEntityError(DataError, KeyError):
    def __init__(self, kind: str, entity_id):
        self.kind, self.entity_id = kind, entity_id
        super().__init__(f"unknown {kind} {entity_id!r}")

    def __str__(self):
        return self.args[0]


class EmptyDatasetError(DataError):
    """Raised when filtering leaves nothing."""


class CapabilityError(DataError):
    """A model needs a data column the dataset does not have."""


class FitError(DataError):
    """An exposure or distance model cannot be fitted to the given data."""


class DegenerateDistributionError(DataError):
    """A metric distribution has a zero normaliser."""


class StageError(FairPoiError):
    """A pipeline stage failed; ``cause`` keeps the original exception."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage, self.cause = stage, cause
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}")
