"""Exception types shared across the package."""


class GasserError(Exception):
    """Base class for all library errors."""


class ConfigError(GasserError, ValueError):
    """Bad user-supplied configuration (unknown keys, invalid values)."""


class PreconditionError(GasserError, ValueError):
    """An operation was called with inputs violating its preconditions."""


class GraphParseError(ConfigError):
    """Malformed dataset file. The message carries ``path:line``."""


class GraphRangeError(ConfigError):
    """Node id outside ``[0, n)``."""


class NumericalError(GasserError, ArithmeticError):
    """Numerical failure: non-convergence, rank collapse, non-finite loss."""
