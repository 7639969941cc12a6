"""Exception types shared across the package.

The CLI maps these onto its exit codes: ``FormatError`` is a parse/I-O
failure (2), everything else derived from ``DomainError`` is a domain
violation (3).
"""


class EventViewsError(Exception):
    """Base class for all package errors.

    ``line`` is set by readers that know which input line was at fault.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ContractError(EventViewsError, ValueError):
    """A caller broke an operation's precondition."""


class ConfigError(EventViewsError, ValueError):
    """An encoder, warp or fusion configuration is unusable."""


class DomainError(EventViewsError, ValueError):
    """Input data violates a domain invariant."""


class EventInvariantError(DomainError):
    """An event or stream breaks bounds, polarity or ordering rules."""


class DegenerateInputError(DomainError):
    """Input is valid but too small for the requested operation."""


class NumericError(DomainError, ArithmeticError):
    """A computation produced non-finite values."""


class FormatError(EventViewsError):
    """A file could not be parsed or is truncated/corrupt."""
