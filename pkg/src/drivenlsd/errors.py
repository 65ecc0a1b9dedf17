"""Exception hierarchy.

Every error carries a ``category`` string used by the CLI to build its
categorized message and exit status.
"""

from __future__ import annotations


class LsdError(Exception):
    category = "error"
    exit_code = 1


class ParameterError(LsdError, ValueError):
    category = "parameter"
    exit_code = 2


class ConfigError(ParameterError):
    """Malformed configuration; ``fields`` lists the offending keys."""

    category = "schema"

    def __init__(self, message: str, fields: list[str] | None = None):
        self.fields = list(fields or [])
        if self.fields:
            message = f"{message} (fields: {', '.join(self.fields)})"
        super().__init__(message)


class NumericError(LsdError, ArithmeticError):
    category = "numeric"
    exit_code = 3


class RegimeError(ParameterError):
    category = "regime"


class EmptyAccumulatorError(LsdError):
    category = "empty"
    exit_code = 3


class SpanError(LsdError):
    category = "span"
    exit_code = 4


class InsufficientDataError(LsdError):
    category = "data"
    exit_code = 3


class WindowError(LsdError):
    category = "window"
    exit_code = 3


class OutputError(LsdError, OSError):
    category = "io"
    exit_code = 5
