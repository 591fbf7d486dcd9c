"""Exception hierarchy.

Configuration problems derive from ``ConfigError`` and numerical failures from
``NumericalError`` so the CLI can map them onto distinct exit codes.
"""


class SlowFastError(Exception):
    """Base class for all package errors."""


class ConfigError(SlowFastError, ValueError):
    """Invalid configuration or input."""


class HypothesisViolation(ConfigError):
    """Parameters violate the dissipativity hypothesis (or an inequality's hypothesis)."""


class DimensionMismatch(ConfigError):
    pass


class NegativeTime(ConfigError):
    pass


class NegativeDt(ConfigError):
    pass


class StepTooLarge(ConfigError):
    pass


class DeltaNotAligned(ConfigError):
    pass


class GridMismatch(ConfigError):
    pass


class NumericalError(SlowFastError, ArithmeticError):
    """Failure during time integration or Monte Carlo estimation."""


class NonFinite(NumericalError):
    pass


class ErgodicSolveFailed(NumericalError):
    pass
