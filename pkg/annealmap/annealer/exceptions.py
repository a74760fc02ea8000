"""
Custom exceptions for the annealer app.
"""

from __future__ import annotations

from typing import Sequence

from annealmap.exceptions import AnnealmapError


class AnnealStepError(AnnealmapError):
    """
    Raised when a step cannot complete (fit aborted, degenerate rule, failed solve).

    Carries the step index, the fidelity and the diagnostics of every step
    completed before the failure; the cause is chained.
    """

    def __init__(self, message: str, *, step: int, fidelity: int, diagnostics: Sequence = ()) -> None:
        super().__init__(message)
        self.step = step
        self.fidelity = fidelity
        self.diagnostics = tuple(diagnostics)
