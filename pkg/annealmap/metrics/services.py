"""
Moment, covariance and kernel discrepancies between quadrature rules.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from annealmap import settings
from annealmap.exceptions import ContractViolationError
from forward_models import CountingLikelihood
from quadrature import QuadratureRule, gauss_legendre_rule

from .exceptions import DegenerateCovarianceError
from .models import ErrorMetrics, KernelSpec

logger = logging.getLogger(__name__)

_SQRT3 = np.sqrt(3.0)
_ROW_BLOCK = 2048


def weighted_moments(rule: QuadratureRule) -> tuple[np.ndarray, np.ndarray]:
    """
    Weighted mean and covariance scaled by 1 / (1 - sum w^2).

    Raises:
        ContractViolationError: rule not normalized or fewer than two points
        DegenerateCovarianceError: a single effective point
    """
    if not rule.normalized:
        raise ContractViolationError("weighted_moments needs a normalized rule")
    if rule.size < 2:
        raise ContractViolationError("weighted_moments needs at least two points")
    weights = rule.weights
    concentration = float(np.sum(weights**2))
    if 1.0 - concentration <= np.finfo(float).eps:
        raise DegenerateCovarianceError("covariance undefined: all weight sits on one point")
    mean = weights @ rule.points
    centered = rule.points - mean
    covariance = (weights[:, None] * centered).T @ centered / (1.0 - concentration)
    return mean, covariance


def _check_spd(matrix: np.ndarray, name: str) -> np.ndarray:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.shape[0] != matrix.shape[1] or not np.allclose(matrix, matrix.T, rtol=1e-10, atol=1e-14):
        raise ContractViolationError(f"{name} must be a symmetric matrix")
    try:
        np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError as exc:
        raise ContractViolationError(f"{name} must be positive definite") from exc
    return matrix


def forstner(first: np.ndarray, second: np.ndarray) -> float:
    """Root sum of squared logs of the generalized eigenvalues of (first, second)."""
    first = _check_spd(first, "first covariance")
    second = _check_spd(second, "second covariance")
    if first.shape != second.shape:
        raise ContractViolationError(f"covariance shapes differ: {first.shape} vs {second.shape}")
    eigenvalues = scipy.linalg.eigh(first, second, eigvals_only=True)
    return float(np.sqrt(np.sum(np.log(eigenvalues) ** 2)))


def kernel_matrix(x: np.ndarray, y: np.ndarray, kernel: KernelSpec) -> np.ndarray:
    if kernel.family == "gaussian":
        return np.exp(-0.5 * cdist(x, y, "sqeuclidean") / kernel.bandwidth**2)
    scaled = _SQRT3 * cdist(x, y) / kernel.bandwidth
    return (1.0 + scaled) * np.exp(-scaled)


def _kernel_mean(first: QuadratureRule, second: QuadratureRule, kernel: KernelSpec) -> float:
    total = 0.0
    for start in range(0, first.size, _ROW_BLOCK):
        block = slice(start, start + _ROW_BLOCK)
        total += float(first.weights[block] @ kernel_matrix(first.points[block], second.points, kernel) @ second.weights)
    return total


def mmd2(first: QuadratureRule, second: QuadratureRule, kernel: KernelSpec) -> float:
    """Squared MMD between two weighted rules (may be slightly negative from roundoff)."""
    if not (first.normalized and second.normalized):
        raise ContractViolationError("mmd2 needs normalized rules")
    if first.dimension != second.dimension:
        raise ContractViolationError(
            f"rules differ in dimension: {first.dimension} vs {second.dimension}"
        )
    return (
        _kernel_mean(first, first, kernel)
        - 2.0 * _kernel_mean(first, second, kernel)
        + _kernel_mean(second, second, kernel)
    )


def _mmd(first: QuadratureRule, second: QuadratureRule, kernel: KernelSpec) -> float:
    return float(np.sqrt(max(mmd2(first, second, kernel), 0.0)))


def _ratio(name: str, numerator: float, denominator: float, absolute: set[str]) -> float:
    if denominator < settings.RELATIVE_ERROR_FLOOR:
        absolute.add(name)
        return numerator
    return numerator / denominator


def relative_errors(
    quadrature_rule: QuadratureRule,
    surrogate_rule: QuadratureRule,
    reference_rule: QuadratureRule,
    prior_rule: QuadratureRule,
    bandwidth: float = settings.DEFAULT_MMD_BANDWIDTH,
) -> ErrorMetrics:
    """
    Errors of a step divided by the same errors of the prior.

    Args:
        quadrature_rule: the step's importance rule (mean and covariance)
        surrogate_rule: pullback of a fine rQMC rule through the surrogate (MMD)
        reference_rule: reference posterior rule
        prior_rule: rule for the prior, used for every denominator
        bandwidth: MMD kernel bandwidth

    Returns:
        ErrorMetrics; a metric whose denominator is below RELATIVE_ERROR_FLOOR
        is reported as absolute and named in `absolute`
    """
    mean_q, cov_q = weighted_moments(quadrature_rule)
    mean_r, cov_r = weighted_moments(reference_rule)
    mean_p, cov_p = weighted_moments(prior_rule)
    absolute: set[str] = set()

    def rms(delta: np.ndarray) -> float:
        return float(np.sqrt(np.mean(delta**2)))

    rmse = _ratio("rmse", rms(mean_q - mean_r), rms(mean_p - mean_r), absolute)
    forstner_error = _ratio("forstner", forstner(cov_q, cov_r), forstner(cov_p, cov_r), absolute)

    values = {}
    for name, family in (("mmd_matern15", "matern15"), ("mmd_gaussian", "gaussian")):
        kernel = KernelSpec(family=family, bandwidth=bandwidth)
        values[name] = _ratio(
            name, _mmd(surrogate_rule, reference_rule, kernel), _mmd(prior_rule, reference_rule, kernel), absolute
        )

    if absolute:
        logger.warning(f"prior distance below floor for {sorted(absolute)}; reporting absolute values")

    return ErrorMetrics(
        rmse=rmse,
        forstner=forstner_error,
        mmd_matern=values["mmd_matern15"],
        mmd_gaussian=values["mmd_gaussian"],
        mean=tuple(float(x) for x in mean_q),
        absolute=frozenset(absolute),
    )


def reference_posterior_rule(
    likelihood: CountingLikelihood,
    order: int = settings.DEFAULT_REFERENCE_ORDER,
    *,
    level: int | None = None,
    pool=None,
) -> QuadratureRule:
    """
    Tensor Gauss-Legendre rule reweighted by the (highest-fidelity) likelihood.

    Evaluations are not counted against the annealer's budget.
    """
    grid = gauss_legendre_rule(likelihood.dimension, order)
    level = likelihood.max_level if level is None else level
    log_values = likelihood.log_likelihood_batch(level, grid.points, pool=pool, counted=False)
    with np.errstate(divide="ignore"):
        log_weights = np.log(grid.weights) + log_values
    weights = np.exp(log_weights - logsumexp(log_weights))
    logger.info(f"reference posterior rule: order {order}, {grid.size} points, fidelity {level}")
    return grid.with_weights(weights / weights.sum(), normalized=True)
