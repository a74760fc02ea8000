"""
Append-only on-disk log of likelihood evaluations.
"""

from __future__ import annotations

import csv
import logging
from collections import Counter
from pathlib import Path

import numpy as np

from annealmap import settings

from .exceptions import ArchiveCorruptedError

logger = logging.getLogger(__name__)

Key = tuple


class EvaluationCache:
    """
    Records (fidelity, theta, log-likelihood) rows in a CSV file.

    Keys are (fidelity, theta rounded to LIKELIHOOD_KEY_DIGITS decimals) and
    unique; a key already present is never written again. Reloading the file
    reproduces every record and the per-fidelity counts.
    """

    def __init__(self, path: Path, dimension: int) -> None:
        self.path = Path(path)
        self.dimension = dimension
        self._records: dict[Key, float] = {}
        if self.path.exists():
            self._load()
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("w", newline="", encoding="utf-8") as handle:
                csv.writer(handle).writerow(self._header())

    def _header(self) -> list[str]:
        return ["fidelity", *(f"theta_{i + 1}" for i in range(self.dimension)), "log_likelihood"]

    @staticmethod
    def key(fidelity: int, theta: np.ndarray) -> Key:
        return (int(fidelity), *(float(x) for x in np.round(theta, settings.LIKELIHOOD_KEY_DIGITS)))

    def _load(self) -> None:
        with self.path.open(newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header != self._header():
                raise ArchiveCorruptedError([f"{self.path}: unexpected header {header}"])
            for line_no, row in enumerate(reader, start=2):
                if len(row) != self.dimension + 2:
                    raise ArchiveCorruptedError([f"{self.path}:{line_no}: expected {self.dimension + 2} fields"])
                theta = np.array([float(x) for x in row[1:-1]])
                self._records[self.key(int(row[0]), theta)] = float(row[-1])
        logger.info(f"loaded {len(self._records)} cached evaluations from {self.path}")

    def __len__(self) -> int:
        return len(self._records)

    def counts(self) -> dict[int, int]:
        return dict(sorted(Counter(key[0] for key in self._records).items()))

    def lookup(self, fidelity: int, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        values = np.full(points.shape[0], np.nan)
        found = np.zeros(points.shape[0], dtype=bool)
        for i, theta in enumerate(points):
            value = self._records.get(self.key(fidelity, theta))
            if value is not None:
                values[i] = value
                found[i] = True
        return values, found

    def store(self, fidelity: int, points: np.ndarray, values: np.ndarray) -> None:
        rows = []
        for theta, value in zip(points, values):
            key = self.key(fidelity, theta)
            if key in self._records:
                continue
            self._records[key] = float(value)
            rows.append([int(fidelity), *(repr(float(x)) for x in theta), repr(float(value))])
        if rows:
            with self.path.open("a", newline="", encoding="utf-8") as handle:
                csv.writer(handle).writerows(rows)
