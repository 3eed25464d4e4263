"""Exception types raised across the package."""


class FiberRatesError(Exception):
    """Base class for all package errors."""


class UnsupportedFormatError(FiberRatesError, ValueError):
    """Requested modulation format cannot be built (e.g. odd bits per symbol)."""


class ConfigError(FiberRatesError, ValueError):
    """Invalid link, filter or sweep configuration."""


class NumericalDivergenceError(FiberRatesError, ArithmeticError):
    """Split-step integration produced non-finite samples."""

    def __init__(self, span_index, message=None):
        self.span_index = span_index
        super().__init__(message or f"non-finite field after span {span_index}")


class DegenerateInputError(FiberRatesError, ValueError):
    """Input carries no usable information (zero energy, empty batch, ...)."""
