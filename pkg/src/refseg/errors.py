"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operands have incompatible or unexpected shapes."""


class ConfigError(ValueError):
    """A configuration value is invalid or inconsistent."""


class InputError(ValueError):
    """Bad user-supplied data (e.g. out-of-vocabulary token id)."""


class GraphError(RuntimeError):
    """Autodiff contract violation (e.g. backward from a non-scalar)."""


class NumericsError(FloatingPointError):
    """A NaN or Inf appeared where only finite values are allowed."""
