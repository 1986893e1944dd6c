"""Exception hierarchy shared across chronomap modules."""


class ChronomapError(Exception):
    """Base class for all chronomap errors."""


class DomainError(ChronomapError, ValueError):
    """Input outside the mathematical domain of an operation."""


class ValidationError(ChronomapError, ValueError):
    """Malformed or inconsistent input data."""


class ArityError(ValidationError):
    """Too few samples to determine a fit."""


class DegeneracyError(ChronomapError, ValueError):
    """Numerically or geometrically degenerate configuration."""


class ParseError(ChronomapError, ValueError):
    """Malformed serialized bytes or text."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NotFoundError(ChronomapError, KeyError):
    """Referenced entity does not exist."""
