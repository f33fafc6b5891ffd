"""Exception hierarchy shared by all modules.

Each class maps onto one CLI exit code (see ``cli.EXIT_CODES``).
"""


class BlowupLabError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(BlowupLabError):
    """Invalid parameters, malformed input files or degenerate geometry."""


class ParameterError(ConfigError):
    """A numeric parameter lies outside its admissible range."""


class OutOfRangeError(ParameterError):
    """Exponent outside the interval for which a barrier exists."""

    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


class SearchError(BlowupLabError):
    """A constant search exhausted its range without a certified value."""

    def __init__(self, message, binding=None):
        super().__init__(message)
        self.binding = binding


class NonConvergenceError(BlowupLabError):
    """Newton, ladder or exhaustion did not reach its tolerance."""

    def __init__(self, message, iterate=None, history=None, report=None):
        super().__init__(message)
        self.iterate = iterate
        self.history = history if history is not None else []
        self.report = report


class DivergenceError(NonConvergenceError):
    """Overflow or NaN while evaluating the nonlinearity."""


class InvariantViolation(BlowupLabError):
    """An internal structural property failed (bounds, monotonicity)."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness
