"""Exception types raised by the qrfh package."""


class QrfhError(Exception):
    """Base class for all qrfh-specific errors."""


class InvalidInputError(QrfhError, ValueError):
    """An argument violates a precondition (shape, finiteness, range)."""


class RankDeficiencyError(QrfhError, ValueError):
    """A pivot column collapsed below the numerical-rank floor.

    Raised when the requested basis size exceeds the numerical rank of the
    matrix; the message names the offending orthogonalization step.
    """


class ConvergenceError(QrfhError, RuntimeError):
    """An iterative decomposition failed to converge."""


class InfeasibleBudgetError(QrfhError, ValueError):
    """A bit budget is too small to quantize at the minimum supported depth."""


class PayloadFormatError(QrfhError, ValueError):
    """A serialized payload is malformed; the message names the byte offset."""


class ConfigError(QrfhError, ValueError):
    """A simulation configuration is inconsistent or unsupported."""
