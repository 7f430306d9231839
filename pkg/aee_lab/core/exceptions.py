"""Exception hierarchy shared by the numerical services and the command line runner."""

from typing import Optional


class AeeLabError(Exception):
    """Base class for every error raised by the laboratory."""


class InvalidArgumentError(AeeLabError, ValueError):
    """An operation was called outside its precondition."""


class DegenerateDataError(InvalidArgumentError):
    """All inputs are exactly zero, as produced by a scheme that is exact for the model."""


class NumericOverflowError(AeeLabError, ArithmeticError):
    """A field or solver state became non-finite."""


class ConfigError(AeeLabError, ValueError):
    """An experiment configuration could not be parsed or violates a hard constraint."""


class ReplicaFailedError(AeeLabError, RuntimeError):
    """A Monte Carlo replica failed; the run is aborted."""

    def __init__(self, stream_id: int, cause: Optional[BaseException] = None):
        self.stream_id = stream_id
        self.cause = cause
        super().__init__(f"Replica with stream id {stream_id} failed: {cause}")
