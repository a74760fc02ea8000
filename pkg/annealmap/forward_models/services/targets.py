"""
Closed-form likelihoods on [0,1]^2 with grid-quadrature moment oracles.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy.special import logsumexp

from quadrature import midpoint_grid_rule

from ..models import AnalyticTarget, CountingLikelihood


def gaussian_bump(points: np.ndarray, *, center: tuple[float, float], width: float) -> np.ndarray:
    squared = np.sum((np.atleast_2d(points) - np.asarray(center)) ** 2, axis=1)
    return -squared / (2.0 * width**2)


def gaussian_mixture(
    points: np.ndarray, *, centers: tuple[tuple[float, float], ...], width: float
) -> np.ndarray:
    components = np.stack([gaussian_bump(points, center=c, width=width) for c in centers])
    return logsumexp(components, axis=0) - np.log(len(centers))


def banana(points: np.ndarray, *, curvature: float, spread: float, thickness: float) -> np.ndarray:
    points = np.atleast_2d(points)
    offset = points[:, 0] - 0.5
    ridge = points[:, 1] - 0.25 - curvature * offset**2
    return -(offset**2) / (2.0 * spread**2) - ridge**2 / (2.0 * thickness**2)


CATALOG = {
    "gaussian": (
        partial(gaussian_bump, center=(0.4, 0.6), width=0.08),
        "isotropic Gaussian bump centered at (0.4, 0.6)",
    ),
    "bimodal": (
        partial(gaussian_mixture, centers=((0.3, 0.3), (0.7, 0.7)), width=0.08),
        "equal-weight two-component Gaussian mixture, symmetric about (0.5, 0.5)",
    ),
    "banana": (
        partial(banana, curvature=2.0, spread=0.2, thickness=0.05),
        "curved ridge y = 0.25 + 2 (x - 0.5)^2",
    ),
}


def analytic_targets(levels: int = 1) -> dict[str, AnalyticTarget]:
    """Fresh catalog of analytic targets; each level repeats the same likelihood."""
    return {
        name: AnalyticTarget(name, [function] * levels, dimension=2, description=description)
        for name, (function, description) in CATALOG.items()
    }


@dataclass(frozen=True)
class GridMoments:
    mean: np.ndarray
    covariance: np.ndarray


def grid_moments(target: CountingLikelihood, m: int = 400, *, level: int | None = None) -> GridMoments:
    """Posterior moments under the uniform prior on an m x m midpoint grid (uncounted)."""
    rule = midpoint_grid_rule(target.dimension, m)
    level = target.max_level if level is None else level
    log_values = target.log_likelihood_batch(level, rule.points, counted=False)
    weights = np.exp(log_values - logsumexp(log_values))
    mean = weights @ rule.points
    centered = rule.points - mean
    covariance = (weights[:, None] * centered).T @ centered
    return GridMoments(mean=mean, covariance=covariance)
