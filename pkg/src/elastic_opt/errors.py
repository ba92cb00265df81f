"""Exception hierarchy shared by every module."""


class ElasticOptError(Exception):
    """Base class for all package errors."""


class DimensionError(ElasticOptError):
    """Vector/matrix shapes do not match the operation's contract."""


class NumericsError(ElasticOptError):
    """Non-finite values or a numerical routine failed to converge."""


class ConfigError(ElasticOptError):
    """Invalid parameter or configuration key/value."""


class ProtocolError(ElasticOptError):
    """Kernel called out of protocol (e.g. snapshot on a non-communication step)."""


class UnstableSystemError(ElasticOptError):
    """Spectral radius >= 1 where a stable linear system is required."""


class DivergedError(ElasticOptError):
    """A trajectory exceeded the divergence threshold."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class ReplayMismatchError(ElasticOptError):
    """Replay of an event log diverged from the recorded run."""

    def __init__(self, message: str, event_index: int):
        super().__init__(message)
        self.event_index = event_index


class ParseError(ElasticOptError):
    """Malformed CSV or config text."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class WorkerAbort(ElasticOptError):
    """Network worker gave up (connection loss past retry budget, etc.)."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class TimeoutError(ElasticOptError):  # noqa: A001 - spec names this exception
    """A run did not reach its objective threshold within budget."""
