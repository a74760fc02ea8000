"""
Generalized annealing: tempering within a fidelity, then the next fidelity.

Each step draws a fresh rQMC rule, pulls it back through the current
surrogate, evaluates the active likelihood there, combines every memo of the
fidelity into a tempered rule and fits the next surrogate to it.
"""

from __future__ import annotations

import logging
import time
from typing import Callable, Optional

from annealmap.exceptions import ContractViolationError, DegenerateRuleError
from forward_models import CountingLikelihood, ForwardSolveError
from mis import StageMemo, assemble_rule, prepare_mis
from objective import FitAbortedError, fit
from quadrature import ress, rqmc_rule
from transport import Density, TriangularMap, UniformPrior
from transport.services import pullback_quadrature

from ..exceptions import AnnealStepError
from ..models import AnnealConfig, AnnealResult, AnnealState, BetaChoice, StepDiagnostics
from .evaluation import LikelihoodEvaluator
from .tempering import acceptance_threshold, banded_order, capped_order, choose_beta

logger = logging.getLogger(__name__)

StepCallback = Callable[[AnnealState, StepDiagnostics], None]


def _advance(state: AnnealState, config: AnnealConfig) -> None:
    """Move to the next fidelity or finish, before the next step is drawn."""
    if config.steps_per_fidelity is not None:
        while state.steps_in_fidelity >= config.steps_per_fidelity[state.fidelity - 1]:
            if state.fidelity == config.level_count:
                state.finished = True
                return
            state.advance_fidelity()
        return

    if state.beta < config.threshold(state.fidelity):
        return
    if state.fidelity < config.level_count:
        state.advance_fidelity()
    elif state.refine_done >= config.refine_steps:
        state.finished = True


def _step_order(state: AnnealState, config: AnnealConfig, step: int, choice: BetaChoice, dimension: int) -> int:
    if config.order_policy == "ress_bands" and state.order:
        order = banded_order(state.order, choice.ress)
    else:
        order = config.order(step)
    if config.max_parameter_ratio is None:
        return order

    effective_size = choice.ress * choice.rule.size
    capped = capped_order(order, dimension, effective_size, config.max_parameter_ratio)
    if capped < order:
        logger.info(
            f"step {step}: order {order} lowered to {capped} for effective sample size {effective_size:.1f}"
        )
    return capped


def _select_beta(prepared, state: AnnealState, config: AnnealConfig, cap: float) -> BetaChoice:
    threshold = acceptance_threshold(state.ress, config)
    if state.beta >= 1.0:
        rule = assemble_rule(prepared, 1.0)
        return BetaChoice(beta=1.0, rule=rule, ress=ress(rule), threshold=threshold)

    last_of_fidelity = (
        config.steps_per_fidelity is not None
        and state.steps_in_fidelity + 1 == config.steps_per_fidelity[state.fidelity - 1]
    )
    if last_of_fidelity and state.beta < cap:
        rule = assemble_rule(prepared, cap)
        size = ress(rule)
        return BetaChoice(beta=cap, rule=rule, ress=size, threshold=threshold, forced=size < threshold)

    return choose_beta(prepared, state.beta, state.ress, cap, config)


def _run_step(
    state: AnnealState,
    config: AnnealConfig,
    evaluator: LikelihoodEvaluator,
    prior: Density,
) -> StepDiagnostics:
    started = time.perf_counter()
    step = state.step + 1
    fidelity = state.fidelity
    cap = config.threshold(fidelity)
    first_of_fidelity = state.steps_in_fidelity == 0
    reference = state.surrogate if first_of_fidelity else prior
    n = config.sample_count(step)

    logger.info(f"step {step}: fidelity {fidelity}, n={n}, beta_prev={state.beta!r}")

    base = rqmc_rule(prior.dimension, n, seed=config.rqmc_seed + step)
    proposal = pullback_quadrature(state.surrogate, base)
    log_likelihood, calls = evaluator.evaluate(fidelity, proposal.points)

    memos = state.memos + [
        StageMemo(
            surrogate=state.surrogate,
            points=proposal.points,
            base_weights=proposal.weights,
            log_likelihood=log_likelihood,
            fidelity=fidelity,
        )
    ]
    prepared = prepare_mis(memos, config.gamma, prior)
    choice = _select_beta(prepared, state, config, cap)

    subfloor = choice.ress < config.ress_floor and not (first_of_fidelity and fidelity > 1)
    if subfloor:
        logger.warning(f"step {step}: rESS {choice.ress:.3f} below floor {config.ress_floor}")

    order = _step_order(state, config, step, choice, prior.dimension)
    family = TriangularMap.identity(prior.dimension, order, config.integration_nodes)
    surrogate, report = fit(choice.rule, family, reference, config.fit_config(step))

    state.memos = memos
    state.surrogate = surrogate
    state.rule = choice.rule
    if state.beta >= 1.0:
        state.refine_done += 1
    state.beta = choice.beta
    state.ress = choice.ress
    state.order = order
    state.steps_in_fidelity += 1
    state.evaluations[fidelity] = state.evaluations.get(fidelity, 0) + n

    diagnostics = StepDiagnostics(
        step=step,
        fidelity=fidelity,
        beta=choice.beta,
        parameter_count=report.parameter_count,
        ress=choice.ress,
        new_evaluations=n,
        cumulative_evaluations=dict(state.evaluations),
        wall_time=time.perf_counter() - started,
        order=order,
        final_loss=report.final_loss,
        forced=choice.forced,
        stalled=choice.stalled,
        subfloor=subfloor,
    )
    state.record(diagnostics)
    logger.info(
        f"step {step} done: beta={choice.beta!r} rESS={choice.ress:.3f} p={report.parameter_count} "
        f"loss={report.final_loss:.4g} model calls={calls} ({diagnostics.wall_time:.2f}s)"
    )
    return diagnostics


def anneal(
    likelihood: CountingLikelihood,
    config: AnnealConfig,
    *,
    prior: Optional[Density] = None,
    state: Optional[AnnealState] = None,
    evaluator: Optional[LikelihoodEvaluator] = None,
    on_step: Optional[StepCallback] = None,
) -> AnnealResult:
    """
    Run (or continue) generalized annealing up to beta = 1 on the finest fidelity.

    Args:
        likelihood: hierarchy with one level per threshold
        config: annealing settings
        prior: uniform prior on the cube unless given
        state: progress of an interrupted run to continue from
        evaluator: likelihood evaluator (pool size, cache); built from config if omitted
        on_step: called after every completed step, e.g. to persist the archive

    Returns:
        AnnealResult with the final surrogate, rule, diagnostics and memos

    Raises:
        AnnealStepError: a step failed; completed steps are in its diagnostics
    """
    if likelihood.max_level != config.level_count:
        raise ContractViolationError(
            f"config has {config.level_count} thresholds, likelihood has {likelihood.max_level} fidelities"
        )
    prior = prior or UniformPrior(likelihood.dimension)
    state = state or AnnealState(surrogate=prior)
    evaluator = evaluator or LikelihoodEvaluator(likelihood, workers=config.workers)

    with evaluator:
        _advance(state, config)
        while not state.finished:
            try:
                diagnostics = _run_step(state, config, evaluator, prior)
            except (FitAbortedError, DegenerateRuleError, ForwardSolveError) as exc:
                logger.error(f"step {state.step + 1} failed at fidelity {state.fidelity}: {exc}", exc_info=True)
                raise AnnealStepError(
                    f"step {state.step + 1} failed: {exc}",
                    step=state.step + 1,
                    fidelity=state.fidelity,
                    diagnostics=state.diagnostics,
                ) from exc
            if on_step is not None:
                on_step(state, diagnostics)
            _advance(state, config)

    logger.info(f"annealing finished after {state.step} steps; evaluations {state.evaluations}")
    return AnnealResult(
        surrogate=state.surrogate,
        rule=state.rule,
        diagnostics=tuple(state.diagnostics),
        memos=tuple(state.memos),
        evaluations=dict(state.evaluations),
    )
