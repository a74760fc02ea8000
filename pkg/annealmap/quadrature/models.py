from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from annealmap import settings
from annealmap.exceptions import ContractViolationError, DomainError


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """
    Points in [0,1]^d with non-negative weights.

    The universal currency between apps. Arrays are copied on construction and
    marked read-only, so a rule can be shared freely between workers.
    """

    points: np.ndarray
    weights: np.ndarray
    normalized: bool = False

    def __post_init__(self) -> None:
        points = np.array(self.points, dtype=float)
        weights = np.array(self.weights, dtype=float)

        if points.ndim != 2:
            raise ContractViolationError(f"points must be a 2-d array, got shape {points.shape}")
        if weights.ndim != 1:
            raise ContractViolationError(f"weights must be a 1-d array, got shape {weights.shape}")
        if points.shape[0] < 1 or points.shape[1] < 1:
            raise ContractViolationError("a rule needs at least one point of dimension >= 1")
        if points.shape[0] != weights.shape[0]:
            raise ContractViolationError(
                f"points and weights differ in length: {points.shape[0]} != {weights.shape[0]}"
            )
        if not np.all(np.isfinite(points)) or np.any(points < 0.0) or np.any(points > 1.0):
            raise DomainError("rule points must lie in the closed unit hypercube")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0.0):
            raise ContractViolationError("rule weights must be finite and non-negative")
        if self.normalized and abs(weights.sum() - 1.0) > settings.NORMALIZATION_TOL:
            raise ContractViolationError(
                f"rule flagged normalized but weights sum to {weights.sum()!r}"
            )

        points.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @property
    def dimension(self) -> int:
        return int(self.points.shape[1])

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    def __len__(self) -> int:
        return self.size

    def with_weights(self, weights: np.ndarray, *, normalized: bool) -> QuadratureRule:
        return QuadratureRule(points=self.points, weights=weights, normalized=normalized)

    def with_points(self, points: np.ndarray) -> QuadratureRule:
        return QuadratureRule(points=points, weights=self.weights, normalized=self.normalized)
