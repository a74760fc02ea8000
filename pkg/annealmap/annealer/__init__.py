"""
Generalized annealing over temperatures and fidelities.
"""

from .exceptions import AnnealStepError
from .models import AnnealConfig, AnnealResult, AnnealState, BetaChoice, StepDiagnostics

__all__ = [
    "AnnealConfig",
    "AnnealResult",
    "AnnealState",
    "AnnealStepError",
    "BetaChoice",
    "StepDiagnostics",
]
