#!/usr/bin/env python3
"""
errors.py

Exception hierarchy for GaugeOptics.

Every error carries the process exit code the command line reports for it:

    2 ... configuration / usage problems
    3 ... numerical failures (instability, invalid eikonal region, ...)
    4 ... violated scenario or data invariants

Errors caused by bad arguments also derive from ``ValueError`` so callers
that only care about "invalid input" can keep catching that.
"""

from __future__ import annotations

from typing import Any, Dict, Optional


class GaugeOpticsError(Exception):
    """Base class of every error raised by the package."""

    exit_code: int = 3

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details

    def to_dict(self) -> Dict[str, Any]:
        """Machine readable form written to ``error.json``."""
        return {
            "error": type(self).__name__,
            "exit_code": self.exit_code,
            "message": self.message,
            "details": {k: _jsonable(v) for k, v in self.details.items()},
        }


def _jsonable(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return str(value)


# --------------------------------------------------------------------------- #
# Configuration and usage
# --------------------------------------------------------------------------- #
class ConfigError(GaugeOpticsError, ValueError):
    """Unreadable or malformed configuration; reports line and/or key."""

    exit_code = 2

    def __init__(
        self,
        message: str,
        key: Optional[str] = None,
        line: Optional[int] = None,
        column: Optional[int] = None,
    ) -> None:
        super().__init__(message, key=key, line=line, column=column)
        self.key = key
        self.line = line
        self.column = column


class UsageError(GaugeOpticsError, ValueError):
    """Command used with an invalid combination of arguments."""

    exit_code = 2


class InvariantViolation(GaugeOpticsError, ValueError):
    """A configuration or data invariant does not hold."""

    exit_code = 4

    def __init__(self, invariant: str, message: str, **details: Any) -> None:
        super().__init__(message, invariant=invariant, **details)
        self.invariant = invariant


# --------------------------------------------------------------------------- #
# Invalid inputs to the physics operations
# --------------------------------------------------------------------------- #
class DegenerateRegionError(InvariantViolation):
    def __init__(self, message: str) -> None:
        super().__init__("non-degenerate region", message)


class SingularPointError(GaugeOpticsError, ValueError):
    """Evaluation at (or a segment through) a declared singular point."""


class SuperluminalWorldlineError(InvariantViolation):
    def __init__(self, message: str, **details: Any) -> None:
        super().__init__("worldline speed < 1", message, **details)


class PathMismatchError(GaugeOpticsError, ValueError):
    """Two paths that should share their endpoints do not."""


class SpacelikeSegmentError(GaugeOpticsError, ValueError):
    """A 4-path segment with |Δx| > Δt."""


class PacketPlacementError(InvariantViolation):
    def __init__(self, message: str, **details: Any) -> None:
        super().__init__("packet inside interior region", message, **details)


class ProfileMismatchError(GaugeOpticsError, ValueError):
    """Profiles without a common coordinate range."""


# --------------------------------------------------------------------------- #
# Numerical failures
# --------------------------------------------------------------------------- #
class NumericalError(GaugeOpticsError):
    exit_code = 3


class InstabilityError(NumericalError):
    """Non-finite amplitude produced during propagation."""


class InsufficientHistoryError(NumericalError):
    """Retarded time falls outside the sampled worldline."""


class TurningPointError(NumericalError):
    """Classically forbidden point on an eikonal path."""


class ForbiddenRegionError(NumericalError):
    """Sub-mass-shell point on a relativistic eikonal path."""


class InsufficientFringesError(NumericalError):
    """Fewer than three maxima in the analysis window."""
