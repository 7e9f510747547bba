"""Error taxonomy for tvcmob.

Every failure the library raises on purpose is a TvcError with a stable
``code`` string, so the CLI can map it to an exit status and reports can
carry it verbatim.
"""

from __future__ import annotations

from typing import Optional


class TvcError(Exception):
    """Base class for all deliberate tvcmob failures."""

    code = "TVC_ERROR"

    def __init__(self, message: str, location: Optional[str] = None) -> None:
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class SchemaError(TvcError):
    """A configuration field is missing or has the wrong shape."""

    code = "SCHEMA_ERROR"


class InvariantError(TvcError):
    """A configuration value breaks a model invariant."""

    code = "INVARIANT_ERROR"


class ReducibleChainError(TvcError):
    """Transition matrix has no unique stationary distribution."""

    code = "REDUCIBLE_CHAIN"


class TooManyRectsError(TvcError):
    code = "TOO_MANY_RECTS"


class NoHitPossibleError(TvcError):
    code = "NO_HIT_POSSIBLE"


class NoMeetingPossibleError(TvcError):
    code = "NO_MEETING_POSSIBLE"


class StepTooCoarseError(TvcError):
    """Halving the ODE step changed the final value by more than the tolerance."""

    code = "STEP_TOO_COARSE"


class TraceParseError(TvcError):
    """Malformed trace or contact CSV; ``line`` is 1-based."""

    code = "PARSE_ERROR"

    def __init__(self, message: str, line: int = 0) -> None:
        self.line = line
        super().__init__(message, location=f"line {line}" if line else None)


class NonMonotoneTimeError(TvcError):
    code = "NON_MONOTONE_TIME"

    def __init__(self, message: str, line: int = 0) -> None:
        self.line = line
        super().__init__(message, location=f"line {line}" if line else None)


class TraceIOError(TvcError):
    """Writing a trace to its sink failed."""

    code = "IO_ERROR"
