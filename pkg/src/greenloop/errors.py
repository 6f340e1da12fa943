"""Exception types shared across the package."""

from __future__ import annotations


class GreenloopError(Exception):
    """Base class for all package errors."""


class RejectedInputError(GreenloopError, ValueError):
    """An operation received an input that violates its preconditions."""


class BudgetExceededError(GreenloopError):
    """A ledger commit would push cumulative emissions past the budget.

    Carries the would-be overshoot so callers can report how far over
    the attempt landed. The ledger is left unchanged.
    """

    def __init__(self, message: str, overshoot_kg: float, tag: str | None = None):
        super().__init__(message)
        self.overshoot_kg = overshoot_kg
        self.tag = tag


class NonFiniteGradientError(GreenloopError):
    """A training step produced NaN or Inf gradients."""


class TraceParseError(GreenloopError, ValueError):
    """A carbon-intensity trace file failed to parse. Carries the 1-based line."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class CorruptLogError(GreenloopError, ValueError):
    """An event log file failed to parse. Carries the 1-based line."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ConfigError(GreenloopError, ValueError):
    """A run configuration file is missing, unreadable, or inconsistent."""
