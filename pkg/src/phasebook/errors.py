"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration value."""


class FramingError(ValueError):
    """Bit-stream length does not match the frame layout."""


class EstimationError(RuntimeError):
    """An estimator was left with no usable observations."""
