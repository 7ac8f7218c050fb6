"""Exception types shared across the simulator.

Each maps to a CLI exit code: ConfigError -> 2, DataError -> 3,
NumericalError -> 4. ShapeError is a contract violation inside the
numeric layer and usually indicates a programming error rather than
bad user input.
"""


class FedsimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(FedsimError):
    """Invalid or inconsistent configuration (bad key, bad value, broken invariant)."""


class DataError(FedsimError):
    """Problem with corpus files or token data (missing file, empty text, short shard)."""


class ShapeError(FedsimError):
    """Tensor shape or compatibility violation."""


class NumericalError(FedsimError):
    """Non-finite value encountered where the contract requires finite numbers."""
