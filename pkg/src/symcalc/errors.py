"""Exception types shared across the package."""


class SymcalcError(Exception):
    """Base class for all package errors."""


class ConfigError(SymcalcError):
    """Invalid configuration: bad architecture parameters, dim mismatches, bad CLI config."""


class StructuralError(SymcalcError):
    """Shapes or indices inconsistent with a network layout."""


class FormatError(SymcalcError):
    """A binary or record file does not conform to its documented format."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NoOperandsError(SymcalcError):
    """No numbers available in the text to feed the calculator."""


class DivergenceError(SymcalcError):
    """Training produced a non-finite loss."""
