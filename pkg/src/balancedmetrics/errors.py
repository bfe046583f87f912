"""Exception hierarchy.

Errors split into two families so callers (notably the CLI) can tell bad
input apart from numerical breakdown.
"""


class BalancedMetricsError(Exception):
    """Base class for all package errors."""


class InvalidInputError(BalancedMetricsError, ValueError):
    """Parameters or files violate a documented precondition."""


class NumericalError(BalancedMetricsError, ArithmeticError):
    """A computation produced a degenerate or non-positive quantity."""


class NotPositiveDefiniteError(NumericalError):
    pass


class BasePointError(NumericalError):
    """All sections vanish (numerically) at a quadrature node."""


class QuadratureDegenerateError(NumericalError):
    """The discretized Gram matrix or Donaldson image lost positivity."""


class CurvatureError(NumericalError):
    """A Bergman metric has non-positive curvature at some node."""


class FlowStepError(NumericalError):
    """Gradient-flow step size fell below the allowed minimum."""


class DegenerateStartError(InvalidInputError):
    """Initial product is too ill-conditioned to iterate on."""


class NotAFixedPointError(InvalidInputError):
    """An operation that needs a balanced product was given something else."""


class InsufficientDataError(InvalidInputError):
    """Too few usable samples to estimate a rate or fit."""
