"""Exception types shared across the package."""


class RlspruneError(Exception):
    """Base class for all package errors."""


class DimensionError(RlspruneError):
    """Operand shapes are incompatible with the requested operation."""


class FormatError(RlspruneError):
    """A data or checkpoint file is malformed."""


class ConfigError(RlspruneError):
    """A configuration value is out of range or inconsistent."""


class SingularityError(RlspruneError):
    """An inverse-autocorrelation update hit a degenerate denominator."""


class StateError(RlspruneError):
    """An operation was called on inconsistent or missing state."""
