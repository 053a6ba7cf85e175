"""Exception hierarchy shared by every divtest module."""


class DivtestError(ValueError):
    """Base class for all library errors."""


class NonPositiveEntry(DivtestError):
    pass


class NotNormalized(DivtestError):
    pass


class DimensionMismatch(DivtestError):
    pass


class DomainError(DivtestError):
    pass


class NotPositiveDefinite(DivtestError):
    pass


class StepTooLarge(DivtestError):
    pass


class NonPositiveWeight(DivtestError):
    pass


class QuadratureFailure(DivtestError, ArithmeticError):
    pass


class ConvergenceFailure(DivtestError, ArithmeticError):
    pass


class DegenerateHypotheses(DivtestError):
    """Raised when P and Q are numerically indistinguishable."""


class SizeLimit(DivtestError):
    """Raised when a type enumeration would exceed the configured cap."""


class BoundaryEvaluation(DivtestError):
    """Raised when a divergence cannot be evaluated at a boundary type."""


class RadiusTooLarge(DivtestError):
    pass


class InfeasibleRounding(DivtestError):
    pass
