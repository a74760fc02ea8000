"""
Adaptive choice of the next inverse temperature and of the next map order.
"""

from __future__ import annotations

import logging

import numpy as np

from annealmap import settings
from annealmap.exceptions import ContractViolationError
from mis import PreparedMIS, assemble_rule
from quadrature import ress
from transport import MultiIndexSet

from ..models import AnnealConfig, BetaChoice

logger = logging.getLogger(__name__)


def acceptance_threshold(r_prev: float, config: AnnealConfig) -> float:
    return max(config.discount * r_prev, config.ress_floor)


def candidate_betas(beta_prev: float, cap: float, n_beta: int) -> np.ndarray:
    """Grid q / n_beta strictly between beta_prev and cap, with cap itself appended."""
    grid = np.arange(1, n_beta + 1) / n_beta
    keep = (grid > beta_prev) & (grid < cap) & ~np.isclose(grid, cap, rtol=0.0, atol=1e-12)
    grid = grid[keep]
    if cap > beta_prev:
        grid = np.append(grid, cap)
    return grid


def choose_beta(
    prepared: PreparedMIS,
    beta_prev: float,
    r_prev: float,
    cap: float,
    config: AnnealConfig,
) -> BetaChoice:
    """
    Largest candidate in (beta_prev, cap] whose rule keeps rESS >= max(rho r_prev, r_min).

    Candidate rules are rebuilt from the prepared memos only, so no likelihood
    is evaluated. If no candidate qualifies the smallest one is forced; if no
    candidate exceeds beta_prev the previous beta is returned as stalled.
    """
    if not 0.0 <= beta_prev <= cap <= 1.0:
        raise ContractViolationError(f"need 0 <= beta_prev <= cap <= 1, got beta_prev={beta_prev} cap={cap}")

    threshold = acceptance_threshold(r_prev, config)
    candidates = candidate_betas(beta_prev, cap, config.n_beta)

    if candidates.size == 0:
        rule = assemble_rule(prepared, beta_prev)
        logger.info(f"beta stalled at {beta_prev!r} (cap {cap!r})")
        return BetaChoice(beta=beta_prev, rule=rule, ress=ress(rule), threshold=threshold, stalled=True)

    for beta in candidates[::-1]:
        rule = assemble_rule(prepared, float(beta))
        size = ress(rule)
        if size >= threshold:
            return BetaChoice(beta=float(beta), rule=rule, ress=size, threshold=threshold)

    # The loop ended on the smallest candidate.
    logger.warning(
        f"no beta in ({beta_prev!r}, {cap!r}] reaches rESS {threshold:.3f}; forcing beta={float(candidates[0])!r} "
        f"with rESS {size:.3f}"
    )
    return BetaChoice(beta=float(candidates[0]), rule=rule, ress=size, threshold=threshold, forced=True)


def banded_order(previous: int, relative_ess: float, bands: tuple[float, float] = settings.ORDER_POLICY_BANDS) -> int:
    """Lower the order after a poor rESS, raise it after a good one (never below 1)."""
    low, high = bands
    if relative_ess < low:
        return max(1, previous - 1)
    if relative_ess > high:
        return previous + 1
    return previous


def parameter_count(dimension: int, order: int) -> int:
    """Coefficients of a total-order triangular map on [0,1]^dimension."""
    return sum(MultiIndexSet(dimension=k + 1, order=order).cardinality for k in range(dimension))


def capped_order(order: int, dimension: int, effective_size: float, ratio: float) -> int:
    """
    Largest order <= `order` whose map has at most ratio * effective_size
    coefficients; never below 1.
    """
    budget = ratio * effective_size
    while order > 1 and parameter_count(dimension, order) > budget:
        order -= 1
    return order
