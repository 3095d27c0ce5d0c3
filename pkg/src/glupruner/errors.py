"""Exception hierarchy shared by all glupruner modules."""


class GluPrunerError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(GluPrunerError):
    """Malformed container file (bad header, bad offsets, truncated payload)."""


class UnsupportedDtypeError(FormatError):
    """Tensor declares a dtype the loader does not accept."""


class UnsupportedShapeError(FormatError):
    """Tensor declares a shape other than 1-D or 2-D."""


class DataError(GluPrunerError):
    """Tensor payload contains NaN or Inf."""


class DimensionError(GluPrunerError):
    """Operand shapes or lengths are incompatible."""


class ShapeError(GluPrunerError):
    """Shape violates a structural requirement (e.g. N:M divisibility)."""


class ConfigError(GluPrunerError):
    """Invalid configuration value."""


class ConstraintError(GluPrunerError):
    """A mask or compressed tensor violates its sparsity pattern."""


class EmptyCalibrationError(GluPrunerError):
    """Calibration stream contained zero tokens."""
