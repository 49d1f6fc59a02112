"""Exception types raised across the package."""


class UIPError(Exception):
    """Base class for all package errors."""


class ModelValidationError(UIPError, ValueError):
    """Inconsistent or degenerate model, payoff or configuration input."""


class NumericalDivergence(UIPError, RuntimeError):
    """A numerical scheme left its admissible envelope."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class RankDeficiencyError(UIPError, RuntimeError):
    """Regression design too poorly conditioned for the number of paths."""


class HypothesisViolation(UIPError, ValueError):
    """The payoff does not satisfy the hypothesis a result relies on."""


class QuadratureError(UIPError, RuntimeError):
    """A quadrature refinement check failed."""
