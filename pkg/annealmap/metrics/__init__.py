"""
Error metrics against a reference posterior.
"""

from .exceptions import DegenerateCovarianceError
from .models import ErrorMetrics, KernelSpec
from .services import (
    forstner,
    kernel_matrix,
    mmd2,
    reference_posterior_rule,
    relative_errors,
    weighted_moments,
)

__all__ = [
    "DegenerateCovarianceError",
    "ErrorMetrics",
    "KernelSpec",
    "forstner",
    "kernel_matrix",
    "mmd2",
    "reference_posterior_rule",
    "relative_errors",
    "weighted_moments",
]
