from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from annealmap.exceptions import ContractViolationError
from transport import Density


@dataclass(frozen=True, eq=False)
class StageMemo:
    """
    Cached record of one annealing step.

    Holds the surrogate that proposed the abscissae, the abscissae, their base
    weights and the log-likelihood values computed at them for one fidelity.
    """

    surrogate: Density
    points: np.ndarray
    base_weights: np.ndarray
    log_likelihood: np.ndarray
    fidelity: int

    def __post_init__(self) -> None:
        points = np.array(self.points, dtype=float)
        base_weights = np.array(self.base_weights, dtype=float).reshape(-1)
        log_likelihood = np.array(self.log_likelihood, dtype=float).reshape(-1)

        if points.ndim != 2 or points.shape[1] != self.surrogate.dimension:
            raise ContractViolationError(
                f"memo points must have shape (n, {self.surrogate.dimension}), got {points.shape}"
            )
        n = points.shape[0]
        if n < 1 or base_weights.shape[0] != n or log_likelihood.shape[0] != n:
            raise ContractViolationError(
                f"memo sequences must share one length >= 1: points={n} "
                f"weights={base_weights.shape[0]} log_likelihood={log_likelihood.shape[0]}"
            )
        if np.any(np.isnan(log_likelihood)) or np.any(log_likelihood == np.inf):
            raise ContractViolationError("memo log-likelihood values must be finite or -inf")
        if np.any(base_weights < 0.0) or not np.all(np.isfinite(base_weights)):
            raise ContractViolationError("memo base weights must be finite and non-negative")

        for array in (points, base_weights, log_likelihood):
            array.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "base_weights", base_weights)
        object.__setattr__(self, "log_likelihood", log_likelihood)

    @property
    def sample_count(self) -> int:
        return int(self.points.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.points.shape[1])


@dataclass(frozen=True, eq=False)
class PreparedMIS:
    """
    The beta-independent part of a multiple importance rule.

    log_base holds log(partition * base weight / v) per point, so the rule for
    any beta only needs log_base + beta * log_likelihood.
    """

    points: np.ndarray
    log_base: np.ndarray
    log_likelihood: np.ndarray
    stage: np.ndarray
    fidelity: int

    @property
    def size(self) -> int:
        return int(self.points.shape[0])
