"""Exception hierarchy shared by every module.

Each error class carries the process exit code the CLI maps it to, so the
mapping lives in exactly one place.
"""

from __future__ import annotations

__all__ = [
    "SpnschedError",
    "ConfigurationError",
    "AssumptionViolationError",
    "NumericError",
]


class SpnschedError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigurationError(SpnschedError):
    """Invalid or inconsistent inputs: bad dimensions, malformed config files,
    parameters outside an operation's stated preconditions."""

    exit_code = 2


class AssumptionViolationError(SpnschedError):
    """A modelling assumption failed at runtime, e.g. an arrival-rate vector
    outside the capacity region of the scheduling set."""

    exit_code = 3


class NumericError(SpnschedError):
    """A numeric routine failed to converge or degenerated.

    Carries enough state for post-mortems: the iteration count reached and the
    final optimality gap (when the failing routine has one).
    """

    exit_code = 4

    def __init__(self, message: str, *, iterations: int | None = None,
                 gap: float | None = None):
        super().__init__(message)
        self.iterations = iterations
        self.gap = gap
