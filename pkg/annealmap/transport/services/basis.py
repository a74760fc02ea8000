from __future__ import annotations

import numpy as np

from annealmap.exceptions import DomainError

from ..models import MultiIndexSet


def shifted_legendre(t: np.ndarray, degree: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Shifted Legendre polynomials P~_k(t) = P_k(2t - 1) for k = 0..degree.

    Returns values, first and second t-derivatives, each with a trailing axis
    of length degree + 1.
    """
    t = np.asarray(t, dtype=float)
    x = 2.0 * t - 1.0
    ones = np.ones_like(x)
    zeros = np.zeros_like(x)

    values = [ones, x]
    first = [zeros, ones]
    second = [zeros, zeros]
    for k in range(1, degree):
        values.append(((2 * k + 1) * x * values[k] - k * values[k - 1]) / (k + 1))
        first.append(first[k - 1] + (2 * k + 1) * values[k])
        second.append(second[k - 1] + (2 * k + 1) * first[k])

    n = degree + 1
    return (
        np.stack(values[:n], axis=-1),
        2.0 * np.stack(first[:n], axis=-1),
        4.0 * np.stack(second[:n], axis=-1),
    )


def _check_cube(points: np.ndarray) -> None:
    if not np.all(np.isfinite(points)) or np.any(points < 0.0) or np.any(points > 1.0):
        raise DomainError("basis evaluation needs points in [0,1]^d")


def basis_eval(index_set: MultiIndexSet, theta: np.ndarray) -> np.ndarray:
    """
    Derivative-form basis at theta.

    Per index alpha: prod_{j<d'} P~_{alpha_j}(theta_j) * P~'_{alpha_d'}(theta_d').
    Accepts a single point (d',) or a batch (N, d').
    """
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    points = np.atleast_2d(theta)
    if points.shape[1] != index_set.dimension:
        raise DomainError(
            f"basis of dimension {index_set.dimension} evaluated at points of dimension {points.shape[1]}"
        )
    _check_cube(points)

    indices = index_set.indices
    out = np.ones((points.shape[0], indices.shape[0]))
    for j in range(index_set.dimension - 1):
        values, _, _ = shifted_legendre(points[:, j], index_set.order)
        out *= values[:, indices[:, j]]
    _, first, _ = shifted_legendre(points[:, -1], index_set.order)
    out *= first[:, indices[:, -1]]
    return out[0] if single else out
