"""
Custom exceptions for the forward_models app.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from annealmap.exceptions import AnnealmapError


class ForwardSolveError(AnnealmapError):
    """Raised when a forward solve fails; carries theta, fidelity and iteration count."""

    def __init__(
        self,
        message: str,
        *,
        theta: np.ndarray,
        fidelity: Optional[int] = None,
        resolution: Optional[int] = None,
        iterations: int = 0,
    ) -> None:
        super().__init__(message)
        self.theta = np.asarray(theta, dtype=float)
        self.fidelity = fidelity
        self.resolution = resolution
        self.iterations = iterations

    def __reduce__(self):
        # Keep keyword state when the error crosses a worker-process boundary.
        return (
            _rebuild_forward_solve_error,
            (str(self), self.theta, self.fidelity, self.resolution, self.iterations),
        )


def _rebuild_forward_solve_error(message, theta, fidelity, resolution, iterations):
    return ForwardSolveError(
        message, theta=theta, fidelity=fidelity, resolution=resolution, iterations=iterations
    )
