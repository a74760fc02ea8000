"""
Custom exceptions for the experiments app.
"""

from __future__ import annotations

from typing import Iterable

from annealmap.exceptions import AnnealmapError


class ConfigValidationError(AnnealmapError, ValueError):
    """Raised when an experiment config is invalid. Carries every problem found."""

    def __init__(self, errors: str | Iterable[str]) -> None:
        self.errors = [errors] if isinstance(errors, str) else list(errors)
        super().__init__("; ".join(self.errors))


class ConfigMismatchError(AnnealmapError):
    """Raised when a run directory was produced by a different config."""
    pass


class ArchiveCorruptedError(AnnealmapError):
    """Raised when archived files do not match their recorded checksums."""

    def __init__(self, report: Iterable[str]) -> None:
        self.report = list(report)
        super().__init__("archive checksum mismatch: " + "; ".join(self.report))


class RunFailedError(AnnealmapError):
    """Raised when a run stops before completion; partial artifacts stay on disk."""
    pass
