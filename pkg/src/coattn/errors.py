"""Exception types shared across the package."""


class CoattnError(Exception):
    """Base class for package errors."""


class DimensionError(CoattnError, ValueError):
    """Tensor or array shapes do not satisfy an operation's contract."""


class ContractError(CoattnError, ValueError):
    """An API precondition other than a shape requirement was violated."""


class ConfigError(CoattnError, ValueError):
    """Invalid or unknown configuration."""


class ParseError(CoattnError, ValueError):
    """Malformed on-disk data (manifest, image file, checkpoint)."""


class SamplingError(CoattnError, RuntimeError):
    """Pair sampling could not find a valid pair."""


class DivergenceError(CoattnError, RuntimeError):
    """Training produced a non-finite loss."""
