"""
Likelihood evaluation for one annealing step: optional cache lookup, then
forward solves on a billiard worker pool.
"""

from __future__ import annotations

import logging
from typing import Optional, Protocol

import numpy as np
from billiard import Pool

from forward_models import CountingLikelihood

logger = logging.getLogger(__name__)


class EvaluationStore(Protocol):
    def lookup(self, fidelity: int, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (values, found mask) for a batch of points."""
        ...

    def store(self, fidelity: int, points: np.ndarray, values: np.ndarray) -> None:
        ...


class LikelihoodEvaluator:
    """
    Evaluates a likelihood level at the abscissae of one step.

    Results are in abscissa order. Cached values are reused and not counted as
    model calls; new values are appended to the store.

    Use as a context manager when workers > 1 so the pool is shut down.
    """

    def __init__(
        self,
        likelihood: CountingLikelihood,
        *,
        workers: int = 1,
        store: Optional[EvaluationStore] = None,
    ) -> None:
        self.likelihood = likelihood
        self.workers = workers
        self.store = store
        self._pool = None

    def __enter__(self) -> LikelihoodEvaluator:
        if self.workers > 1 and self._pool is None:
            self._pool = Pool(processes=self.workers)
            logger.debug(f"started a pool of {self.workers} workers")
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def close(self) -> None:
        if self._pool is not None:
            self._pool.close()
            self._pool.join()
            self._pool = None

    def evaluate(self, fidelity: int, points: np.ndarray) -> tuple[np.ndarray, int]:
        """Returns (log-likelihood values, number of model calls made)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        values = np.empty(points.shape[0])
        missing = np.ones(points.shape[0], dtype=bool)

        if self.store is not None:
            cached, found = self.store.lookup(fidelity, points)
            values[found] = cached[found]
            missing = ~found

        calls = int(missing.sum())
        if calls:
            fresh = self.likelihood.log_likelihood_batch(fidelity, points[missing], pool=self._pool)
            values[missing] = fresh
            if self.store is not None:
                self.store.store(fidelity, points[missing], fresh)

        logger.info(f"fidelity {fidelity}: {points.shape[0]} values, {calls} model calls")
        return values, calls
