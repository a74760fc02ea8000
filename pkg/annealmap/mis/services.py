"""
Multiple tempered importance-weighted quadrature.

Everything is carried in log space; weights are exponentiated once, after a
single global log-sum-exp shift.
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from annealmap import settings
from annealmap.exceptions import ContractViolationError, DegenerateRuleError
from quadrature import QuadratureRule
from transport import Density, UniformPrior
from transport.services import log_pullback

from .models import PreparedMIS, StageMemo

logger = logging.getLogger(__name__)


def _safe_difference(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """a - b with -inf wherever a is -inf (zero weight stays zero)."""
    with np.errstate(invalid="ignore"):
        out = a - b
    return np.where(np.isneginf(a) | np.isnan(out), -np.inf, out)


def _check_beta(beta: float) -> None:
    if not 0.0 < beta <= 1.0:
        raise ContractViolationError(f"beta must lie in (0, 1], got {beta!r}")


def _check_memos(memos: Sequence[StageMemo]) -> None:
    if not memos:
        raise ContractViolationError("at least one stage memo is required")
    fidelities = {memo.fidelity for memo in memos}
    if len(fidelities) != 1:
        raise ContractViolationError(f"memos mix fidelity tags {sorted(fidelities)}")
    dimensions = {memo.dimension for memo in memos}
    if len(dimensions) != 1:
        raise ContractViolationError(f"memos mix dimensions {sorted(dimensions)}")


def power_heuristic(log_densities: np.ndarray, counts: Sequence[int], gamma: float = settings.DEFAULT_GAMMA) -> np.ndarray:
    """
    Partition of unity over J proposals at N points.

    alpha_i(theta) = (n_i pi_i(theta))^gamma / sum_i' (n_i' pi_i'(theta))^gamma,
    from log densities of shape (J, N). A proposal with zero density gets 0.
    """
    log_densities = np.atleast_2d(np.asarray(log_densities, dtype=float))
    log_counts = np.log(np.asarray(counts, dtype=float))[:, None]
    scores = gamma * (log_counts + log_densities)
    with np.errstate(invalid="ignore"):
        log_partition = scores - logsumexp(scores, axis=0, keepdims=True)
    return np.exp(np.where(np.isneginf(scores), -np.inf, log_partition))


def _stage_log_densities(memos: Sequence[StageMemo], points: np.ndarray) -> np.ndarray:
    return np.stack([log_pullback(memo.surrogate, points) for memo in memos])


def prepare_mis(
    memos: Sequence[StageMemo],
    gamma: float = settings.DEFAULT_GAMMA,
    prior: Density | None = None,
) -> PreparedMIS:
    """Evaluate every stage surrogate at every cached point once."""
    _check_memos(memos)
    prior = prior or UniformPrior(memos[0].dimension)

    points = np.concatenate([memo.points for memo in memos])
    stage = np.concatenate([np.full(memo.sample_count, i) for i, memo in enumerate(memos)])
    base_weights = np.concatenate([memo.base_weights for memo in memos])
    log_likelihood = np.concatenate([memo.log_likelihood for memo in memos])

    log_densities = _stage_log_densities(memos, points)
    own = log_densities[stage, np.arange(points.shape[0])]
    log_v = _safe_difference(own, log_pullback(prior, points))

    if len(memos) == 1:
        log_partition = np.where(np.isneginf(own), -np.inf, 0.0)
    else:
        counts = [memo.sample_count for memo in memos]
        with np.errstate(divide="ignore"):
            partition = power_heuristic(log_densities, counts, gamma)
            log_partition = np.log(partition[stage, np.arange(points.shape[0])])

    with np.errstate(divide="ignore"):
        log_base_weights = np.log(base_weights)
    log_base = _safe_difference(log_partition + log_base_weights, log_v)

    return PreparedMIS(
        points=points,
        log_base=log_base,
        log_likelihood=log_likelihood,
        stage=stage,
        fidelity=memos[0].fidelity,
    )


def assemble_rule(prepared: PreparedMIS, beta: float) -> QuadratureRule:
    """
    Normalized rule for inverse temperature beta from precomputed terms.

    Raises:
        DegenerateRuleError: every weight underflows to zero
    """
    _check_beta(beta)
    with np.errstate(invalid="ignore"):
        log_weights = prepared.log_base + beta * prepared.log_likelihood
    log_weights = np.where(np.isnan(log_weights), -np.inf, log_weights)
    shift = logsumexp(log_weights)
    if not np.isfinite(shift):
        raise DegenerateRuleError(f"all importance weights vanish at beta={beta!r}")
    weights = np.exp(log_weights - shift)
    return QuadratureRule(points=prepared.points, weights=weights / weights.sum(), normalized=True)


def mis_quadrature(
    beta: float,
    memos: Sequence[StageMemo],
    gamma: float = settings.DEFAULT_GAMMA,
    prior: Density | None = None,
) -> QuadratureRule:
    """
    Combine all stage memos of one fidelity into a rule for the beta-tempered posterior.

    Raises:
        ContractViolationError: empty memo list or mixed fidelity tags
        DegenerateRuleError: every weight underflows to zero
    """
    _check_beta(beta)
    return assemble_rule(prepare_mis(memos, gamma, prior), beta)


def snis_reweight(memo: StageMemo, beta: float, prior: Density | None = None) -> QuadratureRule:
    """Self-normalized importance rule from a single memo."""
    return mis_quadrature(beta, [memo], prior=prior)
