from __future__ import annotations

import logging

import numpy as np

from annealmap import settings
from annealmap.exceptions import DomainError
from quadrature import QuadratureRule, midpoint_grid_rule

from ..models import Density, Surrogate, TriangularMap, UniformPrior
from .triangular import _as_batch, component_evaluations, map_inverse

logger = logging.getLogger(__name__)


def _chunks(n: int):
    for start in range(0, n, settings.EVALUATION_CHUNK):
        yield slice(start, min(n, start + settings.EVALUATION_CHUNK))


def _log_density_batch(density: Density, points: np.ndarray) -> np.ndarray:
    if isinstance(density, UniformPrior):
        inside = np.all((points >= 0.0) & (points <= 1.0), axis=1)
        return np.where(inside, 0.0, -np.inf)

    evaluations = component_evaluations(density.map, points)
    images = np.column_stack([ev.value for ev in evaluations])
    total = _log_density_batch(density.reference, images)
    for ev in evaluations:
        total = total + ev.log_derivative
    return np.where(np.isnan(total), -np.inf, total)


def log_pullback(density: Density, theta: np.ndarray) -> np.ndarray:
    """
    Log density of a surrogate (or the uniform prior) at theta.

    log eta(S(theta)) + sum_d log dS^(d)/dtheta_d, recursing through composed
    references. Returns -inf where a derivative underflows.
    """
    batch, single = _as_batch(theta, density.dimension)
    out = np.empty(batch.shape[0])
    for block in _chunks(batch.shape[0]):
        out[block] = _log_density_batch(density, batch[block])
    return out[0] if single else out


def _grad_input_batch(density: Density, points: np.ndarray) -> np.ndarray:
    if isinstance(density, UniformPrior):
        return np.zeros_like(points)

    n, d = points.shape
    evaluations = component_evaluations(density.map, points)
    images = np.column_stack([ev.value for ev in evaluations])
    outer = _grad_input_batch(density.reference, images)

    grad = np.zeros((n, d))
    for k, ev in enumerate(evaluations):
        value_grad, log_grad = ev.input_gradients()
        # chain rule through S^(k) plus the log-determinant term
        grad[:, : k + 1] += outer[:, k : k + 1] * value_grad + log_grad
    return grad


def grad_input_log_density(density: Density, theta: np.ndarray) -> np.ndarray:
    """Gradient of the log density with respect to theta, shape (N, d)."""
    batch, single = _as_batch(theta, density.dimension)
    out = np.empty_like(batch)
    for block in _chunks(batch.shape[0]):
        out[block] = _grad_input_batch(density, batch[block])
    return out[0] if single else out


def log_density_and_coefficient_gradient(
    transport_map: TriangularMap, reference: Density, points: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """
    Log pullback density and its gradient with respect to `transport_map`'s coefficients.

    The reference chain is held fixed. Returns (values (N,), gradient (N, P)).
    """
    evaluations = component_evaluations(transport_map, points)
    images = np.column_stack([ev.value for ev in evaluations])
    log_reference = _log_density_batch(reference, images)
    reference_grad = _grad_input_batch(reference, images)

    values = log_reference.copy()
    gradient = np.zeros((points.shape[0], transport_map.parameter_count))
    for k, (ev, block) in enumerate(zip(evaluations, transport_map.blocks())):
        values = values + ev.log_derivative
        gradient[:, block] = (
            reference_grad[:, k : k + 1] * ev.value_coefficient_gradient()
            + ev.log_derivative_coefficient_gradient()
        )
    values = np.where(np.isnan(values), -np.inf, values)
    return values, gradient


def grad_log_pullback(surrogate: Surrogate, theta: np.ndarray) -> np.ndarray:
    """Gradient of log_pullback with respect to the outermost map's coefficients."""
    batch, single = _as_batch(theta, surrogate.dimension)
    _, gradient = log_density_and_coefficient_gradient(surrogate.map, surrogate.reference, batch)
    return gradient[0] if single else gradient


def pull_back_points(density: Density, z: np.ndarray) -> np.ndarray:
    """Transport uniform base points through the inverse chain, innermost map first."""
    batch, single = _as_batch(z, density.dimension)
    if isinstance(density, UniformPrior):
        points = batch.copy()
    else:
        points = batch
        for transport_map in density.chain():
            points = map_inverse(transport_map, points)
    return points[0] if single else points


def pullback_quadrature(density: Density, rule: QuadratureRule) -> QuadratureRule:
    """Points of `rule` moved through the inverse chain; weights copied unchanged."""
    if rule.dimension != density.dimension:
        raise DomainError(
            f"rule of dimension {rule.dimension} cannot be transported by a density of dimension "
            f"{density.dimension}"
        )
    if isinstance(density, UniformPrior):
        return rule
    return rule.with_points(pull_back_points(density, rule.points))


def sample(density: Density, n: int, seed: int) -> np.ndarray:
    """n draws: uniform pseudo-random cube points through the inverse chain."""
    rng = np.random.default_rng(seed)
    return pull_back_points(density, rng.random((n, density.dimension)))


def density_grid(density: Density, m: int = settings.DENSITY_GRID_SIZE) -> tuple[np.ndarray, np.ndarray]:
    """Density values on the m^d midpoint grid. Returns (points, densities)."""
    rule = midpoint_grid_rule(density.dimension, m)
    values = np.exp(log_pullback(density, rule.points))
    logger.debug(f"density_grid m={m} mass={float(values @ rule.weights)!r}")
    return rule.points, values
