"""Exception types raised across the package."""


class LdseqError(Exception):
    """Base class for all library errors."""


class ShapeError(LdseqError, ValueError):
    """Operands have incompatible shapes or lengths."""


class ArgumentError(LdseqError, ValueError):
    """An argument is outside its valid domain."""


class BoundsError(LdseqError, IndexError):
    """An index is outside the valid range."""


class ParseError(LdseqError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DataError(LdseqError, ValueError):
    """Input data is empty or contains items outside a closed set."""


class ConfigError(LdseqError, ValueError):
    """A configuration is invalid or inconsistent."""


class FormatError(LdseqError, ValueError):
    """A serialized file is malformed or has an unsupported version."""
