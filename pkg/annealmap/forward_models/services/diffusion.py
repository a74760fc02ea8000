from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from annealmap import settings
from annealmap.exceptions import ContractViolationError

from ..models import DiffusionForwardModel, DiffusionProblem, LikelihoodHierarchy
from .poisson import observe, solve_poisson

logger = logging.getLogger(__name__)


def single_source_problem(
    resolutions: Sequence[int] = settings.SINGLE_SOURCE_RESOLUTIONS,
    data_resolution: int = settings.DATA_RESOLUTION,
) -> DiffusionProblem:
    return DiffusionProblem(resolutions=tuple(resolutions), data_resolution=data_resolution)


def multi_source_problem(
    resolutions: Sequence[int] = settings.MULTI_SOURCE_RESOLUTIONS,
    data_resolution: int = settings.DATA_RESOLUTION,
    second_center: Sequence[float] = settings.MULTI_SOURCE_CENTERS[1],
) -> DiffusionProblem:
    return DiffusionProblem(
        resolutions=tuple(resolutions),
        data_resolution=data_resolution,
        multi_source=True,
        second_center=(float(second_center[0]), float(second_center[1])),
    )


def generate_data(
    problem: DiffusionProblem, truth: Sequence[float], noise_variance: float, seed: int
) -> np.ndarray:
    """
    Synthetic observations y* from a solve at the data resolution.

    Adds iid Gaussian noise of the given variance (none when it is 0).
    Deterministic under seed.
    """
    if noise_variance < 0.0:
        raise ContractViolationError(f"noise variance must be >= 0, got {noise_variance!r}")
    field_values = solve_poisson(problem, problem.data_resolution, np.asarray(truth, dtype=float))
    clean = observe(field_values, problem.sensors)
    if noise_variance == 0.0:
        return clean
    rng = np.random.default_rng(seed)
    noisy = clean + rng.normal(0.0, np.sqrt(noise_variance), size=clean.shape)
    logger.info(
        f"generated {clean.shape[0]} observations at resolution {problem.data_resolution} "
        f"(noise variance {noise_variance})"
    )
    return noisy


def build_hierarchy(
    problem: DiffusionProblem, observations: np.ndarray, noise_variance: float
) -> LikelihoodHierarchy:
    """One single-source forward model per resolution, coarsest first (level 1)."""
    models = [DiffusionForwardModel(problem=problem, resolution=r) for r in problem.resolutions]
    return LikelihoodHierarchy(models, observations, noise_variance, dimension=2)
