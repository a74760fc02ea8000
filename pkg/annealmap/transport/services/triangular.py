from __future__ import annotations

import logging

import numpy as np
from scipy.optimize import elementwise

from annealmap import settings
from annealmap.exceptions import DomainError, InternalInvariantError

from ..models import MapComponent, TriangularMap
from .component import ComponentEvaluation

logger = logging.getLogger(__name__)


def _as_batch(points: np.ndarray, dimension: int) -> tuple[np.ndarray, bool]:
    points = np.asarray(points, dtype=float)
    single = points.ndim == 1
    batch = np.atleast_2d(points)
    if batch.shape[1] != dimension:
        raise DomainError(f"expected points of dimension {dimension}, got {batch.shape[1]}")
    if not np.all(np.isfinite(batch)) or np.any(batch < 0.0) or np.any(batch > 1.0):
        raise DomainError("map inputs must lie in [0,1]^d")
    return batch, single


def component_evaluations(transport_map: TriangularMap, points: np.ndarray) -> list[ComponentEvaluation]:
    return [
        ComponentEvaluation(component, points[:, : k + 1])
        for k, component in enumerate(transport_map.components)
    ]


def map_forward(transport_map: TriangularMap, theta: np.ndarray) -> np.ndarray:
    batch, single = _as_batch(theta, transport_map.dimension)
    out = np.column_stack([ev.value for ev in component_evaluations(transport_map, batch)])
    return out[0] if single else out


def map_log_determinant(transport_map: TriangularMap, theta: np.ndarray) -> np.ndarray:
    """sum_d log dS^(d)/dtheta_d; -inf where a derivative underflows."""
    batch, single = _as_batch(theta, transport_map.dimension)
    total = np.sum([ev.log_derivative for ev in component_evaluations(transport_map, batch)], axis=0)
    total = np.where(np.isnan(total), -np.inf, total)
    return total[0] if single else total


def map_jacobian(transport_map: TriangularMap, theta: np.ndarray) -> np.ndarray:
    """Lower-triangular Jacobian, shape (N, d, d)."""
    batch, _ = _as_batch(theta, transport_map.dimension)
    n, d = batch.shape
    jacobian = np.zeros((n, d, d))
    for k, ev in enumerate(component_evaluations(transport_map, batch)):
        value_grad, _ = ev.input_gradients()
        jacobian[:, k, : k + 1] = value_grad
    return jacobian


def _invert_component(component: MapComponent, prefix: np.ndarray, targets: np.ndarray) -> np.ndarray:
    out = np.where(targets >= 1.0, 1.0, 0.0)
    interior = (targets > 0.0) & (targets < 1.0)
    if not np.any(interior):
        return out

    def residual(t, z, *columns):
        batch = np.column_stack([*columns, t]) if columns else np.asarray(t, dtype=float)[:, None]
        return ComponentEvaluation(component, batch).value - z

    z = targets[interior]
    columns = tuple(prefix[interior, j] for j in range(prefix.shape[1]))
    result = elementwise.find_root(
        residual,
        (np.zeros_like(z), np.ones_like(z)),
        args=(z, *columns),
        tolerances={"xatol": settings.DEFAULT_INVERSE_TOL, "xrtol": 0.0},
        maxiter=settings.DEFAULT_INVERSE_MAXITER,
    )
    if not np.all(result.success):
        failed = int(np.count_nonzero(~result.success))
        raise InternalInvariantError(
            f"root finding failed for {failed} points of component {component.dimension} "
            f"(status codes {sorted(set(np.asarray(result.status).ravel().tolist()))})"
        )
    out[interior] = np.clip(result.x, 0.0, 1.0)
    return out


def map_inverse(transport_map: TriangularMap, z: np.ndarray) -> np.ndarray:
    """
    Solve S(theta) = z one component at a time.

    Each scalar problem is bracketed on [0, 1] and solved to absolute tolerance
    DEFAULT_INVERSE_TOL.

    Raises:
        InternalInvariantError: a root could not be bracketed or converged
    """
    batch, single = _as_batch(z, transport_map.dimension)
    theta = np.zeros_like(batch)
    for start in range(0, batch.shape[0], settings.EVALUATION_CHUNK):
        block = slice(start, start + settings.EVALUATION_CHUNK)
        for k, component in enumerate(transport_map.components):
            theta[block, k] = _invert_component(component, theta[block, :k], batch[block, k])
    return theta[0] if single else theta
