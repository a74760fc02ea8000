"""
Five-point finite-difference Poisson solves on the unit square.
"""

from __future__ import annotations

import logging
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import cg, factorized

from annealmap import settings
from annealmap.exceptions import ContractViolationError, DomainError

from ..exceptions import ForwardSolveError
from ..models import DiffusionProblem

logger = logging.getLogger(__name__)


def grid_nodes(resolution: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, resolution + 1)


@lru_cache(maxsize=None)
def laplacian(resolution: int) -> sparse.csc_matrix:
    """Dirichlet Laplacian on the (resolution - 1)^2 interior nodes, row-major in (x, y)."""
    interior = resolution - 1
    h = 1.0 / resolution
    second_difference = sparse.diags(
        [np.ones(interior - 1), -2.0 * np.ones(interior), np.ones(interior - 1)],
        [-1, 0, 1],
    ) / h**2
    identity = sparse.identity(interior)
    return (sparse.kron(second_difference, identity) + sparse.kron(identity, second_difference)).tocsc()


@lru_cache(maxsize=None)
def _factorized_solver(resolution: int) -> Callable[[np.ndarray], np.ndarray]:
    # Built lazily per process; worker processes factor on first use.
    return factorized(laplacian(resolution))


def gaussian_source(
    resolution: int, center: np.ndarray, width: float, amplitude: float
) -> np.ndarray:
    """Source values on the full (resolution + 1)^2 grid."""
    nodes = grid_nodes(resolution)
    grid_x, grid_y = np.meshgrid(nodes, nodes, indexing="ij")
    squared = (grid_x - center[0]) ** 2 + (grid_y - center[1]) ** 2
    return amplitude * np.exp(-squared / (2.0 * width**2))


def solve_poisson(
    problem: DiffusionProblem,
    resolution: int,
    theta: np.ndarray,
    *,
    multi_source: bool | None = None,
    amplitude: float | None = None,
) -> np.ndarray:
    """
    Solve Delta u = source, u = 0 on the boundary.

    Returns nodal values on the (resolution + 1)^2 grid, boundary included,
    indexed [i, j] = u(x_i, y_j).

    Raises:
        ForwardSolveError: the residual stays above POISSON_RESIDUAL_TOL
    """
    if resolution < 8:
        raise ContractViolationError(f"resolution must be >= 8, got {resolution}")
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape != (2,) or np.any(theta < 0.0) or np.any(theta > 1.0):
        raise DomainError(f"source center must lie in [0,1]^2, got {theta.tolist()}")

    amplitude = problem.amplitude if amplitude is None else amplitude
    multi_source = problem.multi_source if multi_source is None else multi_source

    source = gaussian_source(resolution, theta, problem.width, amplitude)
    if multi_source:
        source = source + gaussian_source(
            resolution, np.asarray(problem.second_center), problem.width, amplitude
        )

    field_values = np.zeros((resolution + 1, resolution + 1))
    rhs = source[1:-1, 1:-1].ravel()
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return field_values

    matrix = laplacian(resolution)
    solution = _factorized_solver(resolution)(rhs)
    iterations = 0
    residual = float(np.linalg.norm(matrix @ solution - rhs)) / rhs_norm
    if residual > settings.POISSON_RESIDUAL_TOL:
        logger.warning(f"direct solve residual {residual:.3e} at resolution {resolution}; refining with CG")
        counter = {"n": 0}

        def _count(_):
            counter["n"] += 1

        # The Laplacian is negative definite; CG runs on its negation.
        solution, info = cg(-matrix, -rhs, x0=solution, rtol=settings.POISSON_RESIDUAL_TOL, callback=_count)
        iterations = counter["n"]
        residual = float(np.linalg.norm(matrix @ solution - rhs)) / rhs_norm
        if info != 0 or residual > settings.POISSON_RESIDUAL_TOL:
            raise ForwardSolveError(
                f"Poisson solve did not converge (residual {residual:.3e} after {iterations} iterations)",
                theta=theta,
                resolution=resolution,
                iterations=iterations,
            )

    field_values[1:-1, 1:-1] = solution.reshape(resolution - 1, resolution - 1)
    return field_values


def observe(field_values: np.ndarray, sensors: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of a nodal field at sensor locations."""
    field_values = np.asarray(field_values, dtype=float)
    sensors = np.atleast_2d(np.asarray(sensors, dtype=float))
    if np.any(sensors < 0.0) or np.any(sensors > 1.0):
        raise ContractViolationError("sensors must lie inside the unit square")
    if field_values.ndim != 2 or field_values.shape[0] != field_values.shape[1]:
        raise ContractViolationError(f"expected a square nodal field, got shape {field_values.shape}")
    nodes = grid_nodes(field_values.shape[0] - 1)
    interpolator = RegularGridInterpolator((nodes, nodes), field_values, method="linear")
    return interpolator(sensors)
