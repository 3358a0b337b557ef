"""
Exceptions raised by the sequential testing services.

Every exception carries an ``exit_code`` so the command-line front end can map
failures to process exit statuses without inspecting messages.
"""

from typing import Any, List, Optional, Sequence, Tuple


class SequentialTestingError(Exception):
    """Base class for all sequential testing failures."""

    exit_code = 2


class ConfigValidationError(SequentialTestingError, ValueError):
    """Invalid configuration, detected before any computation starts."""

    exit_code = 1

    def __init__(self, issues, line: Optional[int] = None, source: Optional[str] = None):
        if isinstance(issues, str):
            issues = [issues]
        self.issues: List[str] = list(issues)
        self.line = line
        self.source = source
        super().__init__(self._format())

    def __reduce__(self):
        return (type(self), (self.issues, self.line, self.source))

    def _format(self) -> str:
        location = ""
        if self.source:
            location = f"{self.source}"
            if self.line is not None:
                location += f":{self.line}"
            location += ": "
        elif self.line is not None:
            location = f"line {self.line}: "
        return location + "; ".join(self.issues)


class HorizonExhaustedError(SequentialTestingError):
    """A replication reached the step horizon with undecided streams."""

    def __init__(self, horizon: int, partial_record: Any = None, grid_point: Optional[float] = None):
        self.horizon = horizon
        self.partial_record = partial_record
        self.grid_point = grid_point
        message = f"Horizon of {horizon} steps exhausted before every stream was decided"
        if grid_point is not None:
            message += f" (grid point {grid_point!r})"
        super().__init__(message)

    def __reduce__(self):
        # Crosses process boundaries from pool workers
        return (type(self), (self.horizon, self.partial_record, self.grid_point))

    def at_grid_point(self, grid_point: float) -> "HorizonExhaustedError":
        """Return a copy tagged with the sweep grid point that produced it."""
        return HorizonExhaustedError(self.horizon, self.partial_record, grid_point)


class CalibrationFailedError(SequentialTestingError):
    """Monte Carlo calibration did not reach the target band."""

    def __init__(self, message: str, bracket: Tuple[float, float], history: Sequence[Tuple[float, float]] = ()):
        self.bracket = bracket
        self.history = list(history)
        super().__init__(f"{message} (bracket={bracket})")


class PathCountExceededError(SequentialTestingError):
    """Exact enumeration would visit more paths than the guard allows."""

    def __init__(self, path_count: int, limit: int, depth: Optional[int] = None,
                 max_depth: Optional[int] = None):
        self.path_count = path_count
        self.limit = limit
        self.depth = depth
        self.max_depth = max_depth
        message = f"Enumeration needs {path_count} paths, limit is {limit}"
        if depth is not None and max_depth is not None:
            if max_depth >= 1:
                message += f"; lower the depth from {depth} to at most {max_depth}"
            else:
                message += "; even depth 1 is too large, use fewer streams"
        super().__init__(message)


class NumericalError(SequentialTestingError):
    """Non-finite statistic encountered in a stream."""

    def __init__(self, message: str, stream: Optional[int] = None):
        self.stream = stream
        self.detail = message
        if stream is not None:
            message = f"{message} (stream {stream + 1})"
        super().__init__(message)

    def __reduce__(self):
        return (type(self), (self.detail, self.stream))


class InsufficientSpanError(SequentialTestingError):
    """A curve does not cover enough points or decades for a slope fit."""


class PreconditionError(SequentialTestingError):
    """An operation was called outside its documented preconditions."""


class AcceptanceFailure(SequentialTestingError):
    """A verification check (oracle, bound) failed."""

    exit_code = 3
