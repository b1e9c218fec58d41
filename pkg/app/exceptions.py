from typing import Optional


class SlamError(Exception):
    """Base class for every error raised by the backend"""

    def __init__(self, message: str, stage: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.stage = stage

    def __str__(self) -> str:
        if self.stage:
            return f"[{self.stage}] {self.message}"
        return self.message


class InvalidArgumentError(SlamError):
    pass


class DomainError(SlamError):
    """Input outside the domain of a map (e.g. log at rotation angle pi)"""


class DegenerateGeometryError(SlamError):
    pass


class InsufficientCorrespondencesError(SlamError):
    pass


class MissingAnchorError(SlamError):
    pass


class NumericalFailureError(SlamError):
    def __init__(self, message: str, stage: Optional[str] = None, diagnostics: Optional[dict] = None):
        super().__init__(message, stage)
        self.diagnostics = diagnostics or {}


class DataIntegrityError(SlamError):
    pass


class InsufficientAssociationError(SlamError):
    pass


class TrajectoryParseError(SlamError):
    def __init__(self, message: str, line_number: Optional[int] = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ConfigError(InvalidArgumentError):
    """Invalid configuration file, key or value"""


class StageError(SlamError):
    """A pipeline stage failed; wraps the original error"""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(str(cause), stage)
        self.cause = cause


# Errors caused by the caller's input rather than by the numerics
CLIENT_ERRORS = (InvalidArgumentError, TrajectoryParseError, DataIntegrityError, InsufficientAssociationError)
