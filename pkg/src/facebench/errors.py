from __future__ import annotations


class FacebenchError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(FacebenchError, ValueError):
    """Input is well-formed but violates a data-model or protocol rule."""


class ParseError(ValidationError):
    """A file row could not be turned into a record."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += str(path)
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class InvalidArgumentError(FacebenchError, ValueError):
    """An operation was called with arguments outside its domain."""
