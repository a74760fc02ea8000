"""
Likelihood hierarchies: finite-difference diffusion inversions and analytic targets.
"""

from .exceptions import ForwardSolveError
from .models import (
    AnalyticTarget,
    CountingLikelihood,
    DiffusionForwardModel,
    DiffusionProblem,
    LikelihoodHierarchy,
    default_sensors,
)

__all__ = [
    "AnalyticTarget",
    "CountingLikelihood",
    "DiffusionForwardModel",
    "DiffusionProblem",
    "ForwardSolveError",
    "LikelihoodHierarchy",
    "default_sensors",
]
