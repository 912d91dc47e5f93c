"""Complexity landscape of the spherical pure p-spin model: formulas, certificates and experiments."""

from . import (certification, covariance, enumeration, kac_rice, landscape,  # noqa: F401
               random_matrix, special_functions)
from .errors import (DegenerateCovarianceError, DomainError, EmptyEstimateError,  # noqa: F401
                     InconsistencyError, NumericError)

__version__ = "0.1.0"
