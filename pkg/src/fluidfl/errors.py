"""Exception types shared across the package.

Everything derives from FluidError so callers can catch one base class;
the CLI maps ConfigError to exit code 2 and every other FluidError to 3.
"""


class FluidError(ValueError):
    """Base class for all errors raised by this package."""


class ShapeError(FluidError):
    """Array shapes or layer dimensions do not line up."""


class DataError(FluidError):
    """Empty or otherwise unusable input data."""


class RateError(FluidError):
    """Sub-model rate outside (0, 1]."""


class CapacityError(FluidError):
    """More clients requested than there are examples to partition."""


class AggregationError(FluidError):
    """Aggregation received no usable client updates."""


class CalibrationError(FluidError):
    """Threshold calibration asked for without any recorded scores."""


class MeasurementError(FluidError):
    """Non-positive timing measurement."""


class MetricError(FluidError):
    """Weighted metric requested over zero evaluation examples."""


class InfeasibleRateError(FluidError):
    """A keep probability would exceed 1 for the given rate."""


class SlackError(FluidError):
    """Rate formula denominator is not positive."""


class ConfigError(FluidError):
    """Invalid experiment configuration."""
