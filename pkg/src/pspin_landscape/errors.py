"""Exception hierarchy shared by every module."""


class DomainError(ValueError):
    """An argument lies outside the domain of the requested quantity."""


class InconsistencyError(RuntimeError):
    """A relation that must hold by construction failed (signals a formula bug)."""


class NumericError(ArithmeticError):
    """NaN, non-convergence, or another numerical breakdown."""


class DegenerateCovarianceError(NumericError):
    """A covariance block is negative or singular beyond tolerance."""


class EmptyEstimateError(NumericError):
    """A Monte Carlo estimator produced no usable samples."""
