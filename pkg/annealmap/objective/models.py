from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from annealmap import settings
from annealmap.exceptions import ContractViolationError


@dataclass(frozen=True)
class FitConfig:
    steps: int = settings.DEFAULT_FIT_STEPS
    step_size: float = settings.DEFAULT_STEP_SIZE
    momentum: float = settings.DEFAULT_MOMENTUM
    regularization: float = settings.DEFAULT_REGULARIZATION
    # None starts from the identity map (all coefficients zero).
    initial_coefficients: Optional[tuple[float, ...]] = None

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ContractViolationError(f"fit steps must be >= 1, got {self.steps}")
        if not self.step_size > 0.0:
            raise ContractViolationError(f"step size must be > 0, got {self.step_size}")
        if not 0.0 <= self.momentum < 1.0:
            raise ContractViolationError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.regularization < 0.0:
            raise ContractViolationError(f"regularization must be >= 0, got {self.regularization}")

    def with_regularization(self, regularization: float) -> FitConfig:
        return FitConfig(
            steps=self.steps,
            step_size=self.step_size,
            momentum=self.momentum,
            regularization=regularization,
            initial_coefficients=self.initial_coefficients,
        )


@dataclass(frozen=True, eq=False)
class FitReport:
    """Outcome of one cross-entropy fit."""

    coefficients: np.ndarray
    losses: tuple[float, ...]
    gradient_norms: tuple[float, ...]
    final_loss: float
    parameter_count: int
    steps: int = field(default=0)

    @property
    def coefficient_norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))
