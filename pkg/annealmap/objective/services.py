"""
Cross-entropy loss on a quadrature rule and its regularized minimization.
"""

from __future__ import annotations

import logging

import numpy as np

from annealmap.exceptions import ContractViolationError
from quadrature import QuadratureRule
from transport import Density, Surrogate, TriangularMap
from transport.services import log_density_and_coefficient_gradient

from .exceptions import FitAbortedError
from .models import FitConfig, FitReport

logger = logging.getLogger(__name__)


def _require_normalized(rule: QuadratureRule) -> None:
    if not rule.normalized:
        raise ContractViolationError("the cross-entropy loss needs a normalized rule")


def _evaluate(
    coefficients: np.ndarray, rule: QuadratureRule, family: TriangularMap, reference: Density
) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss, its gradient and a mask of weighted points with non-finite log density."""
    if rule.dimension != family.dimension:
        raise ContractViolationError(
            f"rule dimension {rule.dimension} does not match map dimension {family.dimension}"
        )
    transport_map = family.with_coefficients(coefficients)
    active = rule.weights > 0.0
    points = rule.points[active]
    weights = rule.weights[active]

    values, gradient = log_density_and_coefficient_gradient(transport_map, reference, points)
    bad = ~np.isfinite(values)
    if np.any(bad):
        offending = np.zeros(rule.size, dtype=bool)
        offending[np.flatnonzero(active)[bad]] = True
        return float("inf"), np.full(family.parameter_count, np.nan), offending

    value = -float(weights @ values)
    grad = -(weights @ gradient)
    return value, grad, np.zeros(rule.size, dtype=bool)


def loss(
    coefficients: np.ndarray, rule: QuadratureRule, family: TriangularMap, reference: Density
) -> float:
    """
    -sum_k w_k [log eta(S(theta_k; c)) + log |grad S(theta_k; c)|].

    A weighted point with a degenerate reference chain makes the loss +inf;
    the offending points are logged.
    """
    _require_normalized(rule)
    value, _, offending = _evaluate(np.asarray(coefficients, dtype=float), rule, family, reference)
    if np.any(offending):
        logger.warning(f"loss is infinite at {int(offending.sum())} points: {rule.points[offending].tolist()}")
    return value


def loss_gradient(
    coefficients: np.ndarray, rule: QuadratureRule, family: TriangularMap, reference: Density
) -> np.ndarray:
    """Gradient of `loss` in the coefficients; never evaluates a likelihood."""
    _require_normalized(rule)
    _, grad, _ = _evaluate(np.asarray(coefficients, dtype=float), rule, family, reference)
    return grad


def fit(
    rule: QuadratureRule,
    family: TriangularMap,
    reference: Density,
    config: FitConfig | None = None,
) -> tuple[Surrogate, FitReport]:
    """
    Minimize loss + lambda * ||c||^2 with Nesterov momentum.

    Args:
        rule: normalized quadrature rule targeting the current tempered posterior
        family: map structure (dimension and per-component orders); its
            coefficients are ignored
        reference: density the fitted map pulls back (prior or previous surrogate)
        config: optimizer settings

    Returns:
        The fitted surrogate and a FitReport

    Raises:
        FitAbortedError: the loss is non-finite at some iterate
    """
    _require_normalized(rule)
    config = config or FitConfig()
    if config.initial_coefficients is None:
        coefficients = np.zeros(family.parameter_count)
    else:
        coefficients = np.array(config.initial_coefficients, dtype=float)
        if coefficients.shape != (family.parameter_count,):
            raise ContractViolationError(
                f"initial coefficients must have length {family.parameter_count}"
            )

    rho = config.momentum
    eta = config.step_size
    lam = config.regularization
    velocity = np.zeros_like(coefficients)
    losses: list[float] = []
    gradient_norms: list[float] = []

    for iterate in range(config.steps + 1):
        value, grad, offending = _evaluate(coefficients, rule, family, reference)
        if not np.isfinite(value):
            raise FitAbortedError(
                f"non-finite loss at iterate {iterate} ({int(offending.sum())} offending points)",
                iterate=iterate,
                points=rule.points[offending],
            )
        if iterate == config.steps:
            final_loss = value
            break

        grad = grad + 2.0 * lam * coefficients
        losses.append(value)
        gradient_norms.append(float(np.linalg.norm(grad)))

        updated = rho * velocity - eta * grad
        coefficients = coefficients - rho * velocity + (1.0 + rho) * updated
        velocity = updated

    logger.debug(
        f"fit finished: p={family.parameter_count} loss {losses[0]!r} -> {final_loss!r} "
        f"|c|={float(np.linalg.norm(coefficients))!r}"
    )
    report = FitReport(
        coefficients=coefficients,
        losses=tuple(losses),
        gradient_norms=tuple(gradient_norms),
        final_loss=final_loss,
        parameter_count=family.parameter_count,
        steps=config.steps,
    )
    return Surrogate(map=family.with_coefficients(coefficients), reference=reference), report
