"""Exception classes raised across the package.

Each class maps onto one failure category so the CLI can turn any of them
into a nonzero exit code.
"""


class GlyphFuseError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(GlyphFuseError, ValueError):
    """Tensor or image shapes are incompatible."""


class NumericError(GlyphFuseError, ArithmeticError):
    """A non-finite value showed up where a finite one is required."""


class ConfigurationError(GlyphFuseError, ValueError):
    """A configuration value is invalid or inconsistent."""


class SamplingError(GlyphFuseError, ValueError):
    """A batch cannot be drawn under the requested constraints."""


class UnknownIdError(GlyphFuseError, KeyError):
    """A content or label id is outside the known range."""


class TrainingError(GlyphFuseError, RuntimeError):
    """Training diverged; carries the iteration and loss term that failed."""

    def __init__(self, message, iteration=None, term=None):
        super().__init__(message)
        self.iteration = iteration
        self.term = term


class ArgumentError(GlyphFuseError, ValueError):
    """A call received an argument it cannot work with (e.g. an empty set)."""
