"""
Custom exceptions for the objective app.
"""

from __future__ import annotations

import numpy as np

from annealmap.exceptions import AnnealmapError


class FitAbortedError(AnnealmapError):
    """
    Raised when the loss becomes non-finite during a fit.

    Carries the iterate index and the quadrature points whose log density
    was not finite (usually overfit or degenerate weights).
    """

    def __init__(self, message: str, *, iterate: int, points: np.ndarray) -> None:
        super().__init__(message)
        self.iterate = iterate
        self.points = np.asarray(points)
