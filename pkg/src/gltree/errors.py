"""Exception types shared across the package."""


class GltreeError(Exception):
    """Base class for all package errors."""


class DomainError(GltreeError, ValueError):
    """An argument fell outside its documented value range."""


class ShapeError(GltreeError, ValueError):
    """Array/vector dimensions do not match what an operation expects."""


class StateError(GltreeError, RuntimeError):
    """An operation was called on an object in the wrong state."""


class NumericError(GltreeError, ArithmeticError):
    """Non-finite or otherwise unusable numeric input."""


class ParseError(GltreeError, ValueError):
    """Malformed boolean expression text."""


class DataError(GltreeError, ValueError):
    """Unreadable, malformed, or inconsistent dataset input."""


class ConfigError(GltreeError, ValueError):
    """Invalid configuration value or file."""


class ModelFormatError(GltreeError, ValueError):
    """Model file is malformed or has an unsupported version."""


class TrainingFailure(GltreeError, RuntimeError):
    """No attempt produced a model meeting the accuracy target.

    Carries one diagnostic dict per attempt (final loss, freeze state,
    abort reason) so callers can see why the search failed.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])
