"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures onto its
stable contract: 2 for configuration, 3 for data, 4 for numerical failure.
"""


class MSCError(Exception):
    exit_code = 1


class ConfigError(MSCError, ValueError):
    exit_code = 2


class ArgumentError(MSCError, ValueError):
    """Invalid argument value (degenerate input, wrong shape family, ...)."""

    exit_code = 2


class ShapeError(ArgumentError):
    pass


class DataError(MSCError):
    exit_code = 3


class FormatError(DataError, ValueError):
    """Malformed matrix or metadata file."""


class NumericalError(MSCError, ArithmeticError):
    exit_code = 4


class ConvergenceError(NumericalError):
    def __init__(self, message, kkt_violation=None, iterations=None):
        super().__init__(message)
        self.kkt_violation = kkt_violation
        self.iterations = iterations
