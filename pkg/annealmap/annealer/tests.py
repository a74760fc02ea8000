from __future__ import annotations

from unittest import TestCase

import numpy as np

from annealmap.exceptions import ContractViolationError
from forward_models import LikelihoodHierarchy
from forward_models.services import analytic_targets, grid_moments
from metrics import weighted_moments
from mis import StageMemo, assemble_rule, prepare_mis
from objective import FitConfig
from quadrature import ress, rqmc_rule
from transport import UniformPrior
from transport.services import sample

from .exceptions import AnnealStepError
from .models import AnnealConfig
from .services import (
    LikelihoodEvaluator,
    acceptance_threshold,
    anneal,
    banded_order,
    candidate_betas,
    capped_order,
    choose_beta,
    parameter_count,
)

QUICK_FIT = FitConfig(steps=100, step_size=2e-3)


def doubled(theta: np.ndarray) -> np.ndarray:
    return 2.0 * np.asarray(theta)


def three_level_config(**overrides) -> AnnealConfig:
    options = dict(
        thresholds=(0.5, 0.8, 1.0),
        sample_counts=25,
        orders=3,
        steps_per_fidelity=(4, 1, 2),
        fit=QUICK_FIT,
        rqmc_seed=3,
    )
    options.update(overrides)
    return AnnealConfig(**options)


def prior_memo(log_likelihood: np.ndarray, seed: int = 0) -> StageMemo:
    rule = rqmc_rule(2, len(log_likelihood), seed)
    return StageMemo(UniformPrior(2), rule.points, rule.weights, log_likelihood, 1)


class DictStore:
    def __init__(self):
        self.values = {}

    def _key(self, fidelity, theta):
        return (fidelity, *np.round(theta, 15))

    def lookup(self, fidelity, points):
        values = np.full(points.shape[0], np.nan)
        found = np.zeros(points.shape[0], dtype=bool)
        for i, theta in enumerate(points):
            key = self._key(fidelity, theta)
            if key in self.values:
                values[i] = self.values[key]
                found[i] = True
        return values, found

    def store(self, fidelity, points, values):
        for theta, value in zip(points, values):
            self.values[self._key(fidelity, theta)] = float(value)


class AnnealConfigTests(TestCase):
    def test_defaults(self):
        config = AnnealConfig()
        self.assertEqual(config.n_beta, 40)
        self.assertEqual(config.discount, 0.8)
        self.assertEqual(config.ress_floor, 0.5)
        self.assertEqual(config.gamma, 2.0)
        self.assertEqual(config.refine_steps, 1)

    def test_short_schedule_repeats_last_value(self):
        config = AnnealConfig(sample_counts=(10, 20), regularization=(1e-3, 2e-3))
        self.assertEqual(config.sample_count(1), 10)
        self.assertEqual(config.sample_count(5), 20)
        self.assertEqual(config.fit_config(7).regularization, 2e-3)

    def test_rejects_invalid(self):
        for kwargs in (
            {"thresholds": (0.8, 0.5, 1.0)},
            {"thresholds": (0.5, 0.9)},
            {"n_beta": 1},
            {"discount": 1.0},
            {"ress_floor": 0.0},
            {"thresholds": (0.5, 1.0), "steps_per_fidelity": (2,)},
            {"steps_per_fidelity": (3,), "sample_counts": (10, 20)},
            {"max_parameter_ratio": 0.0},
            {"integration_nodes": 0},
        ):
            with self.assertRaises(ContractViolationError):
                AnnealConfig(**kwargs)

    def test_collects_every_problem(self):
        with self.assertRaises(ContractViolationError) as caught:
            AnnealConfig(n_beta=1, discount=2.0)
        self.assertIn("n_beta", str(caught.exception))
        self.assertIn("discount", str(caught.exception))


class TemperingTests(TestCase):
    def test_threshold_arithmetic(self):
        self.assertAlmostEqual(acceptance_threshold(0.9, AnnealConfig()), 0.72, places=12)
        self.assertEqual(acceptance_threshold(0.3, AnnealConfig()), 0.5)

    def test_candidate_grid(self):
        grid = candidate_betas(0.5, 0.8, 40)
        self.assertAlmostEqual(grid[0], 21 / 40)
        self.assertEqual(grid[-1], 0.8)
        self.assertEqual(len(grid), 12)
        self.assertEqual(candidate_betas(0.8, 0.8, 40).size, 0)

    def test_flat_target_reaches_cap(self):
        prepared = prepare_mis([prior_memo(np.full(32, -2.0))])
        choice = choose_beta(prepared, 0.0, 1.0, 0.5, AnnealConfig())
        self.assertEqual(choice.beta, 0.5)
        self.assertAlmostEqual(choice.ress, 1.0, places=12)
        self.assertFalse(choice.forced)

    def test_peaked_target_forces_smallest_step(self):
        log_likelihood = np.full(16, -1e6)
        log_likelihood[0] = 0.0
        prepared = prepare_mis([prior_memo(log_likelihood)])
        choice = choose_beta(prepared, 0.0, 1.0, 1.0, AnnealConfig())
        self.assertTrue(choice.forced)
        self.assertAlmostEqual(choice.beta, 1 / 40)

    def test_stalled_at_cap(self):
        prepared = prepare_mis([prior_memo(np.zeros(8))])
        choice = choose_beta(prepared, 0.5, 1.0, 0.5, AnnealConfig())
        self.assertTrue(choice.stalled)
        self.assertEqual(choice.beta, 0.5)

    def test_largest_qualifying_beta(self):
        target = analytic_targets()["gaussian"]
        rule = rqmc_rule(2, 256, seed=1)
        prepared = prepare_mis([prior_memo(target.log_likelihood_batch(1, rule.points), seed=1)])
        config = AnnealConfig()
        choice = choose_beta(prepared, 0.0, 1.0, 1.0, config)
        self.assertGreaterEqual(choice.ress, 0.8)
        if choice.beta < 1.0:
            above = assemble_rule(prepared, choice.beta + 1 / 40)
            self.assertLess(ress(above), 0.8)

    def test_search_makes_no_model_calls(self):
        target = analytic_targets()["bimodal"]
        rule = rqmc_rule(2, 64, seed=0)
        prepared = prepare_mis([prior_memo(target.log_likelihood_batch(1, rule.points))])
        before = target.counts()
        choose_beta(prepared, 0.0, 1.0, 1.0, AnnealConfig())
        self.assertEqual(target.counts(), before)

    def test_banded_order(self):
        self.assertEqual(banded_order(3, 0.2), 2)
        self.assertEqual(banded_order(1, 0.1), 1)
        self.assertEqual(banded_order(3, 0.9), 4)
        self.assertEqual(banded_order(3, 0.5), 3)

    def test_parameter_counts(self):
        self.assertEqual([parameter_count(2, m) for m in (3, 4, 5, 7)], [9, 14, 20, 35])

    def test_capped_order(self):
        self.assertEqual(capped_order(7, 2, 46.5, 0.5), 5)
        self.assertEqual(capped_order(4, 2, 100.0, 0.5), 4)
        self.assertEqual(capped_order(3, 2, 2.0, 0.5), 1)


class EvaluatorTests(TestCase):
    def test_cache_hits_are_not_model_calls(self):
        target = analytic_targets()["gaussian"]
        points = rqmc_rule(2, 10, seed=0).points
        evaluator = LikelihoodEvaluator(target, store=DictStore())
        first, calls = evaluator.evaluate(1, points)
        self.assertEqual(calls, 10)
        second, calls = evaluator.evaluate(1, points)
        self.assertEqual(calls, 0)
        np.testing.assert_array_equal(first, second)
        self.assertEqual(target.counts(), {1: 10})

    def test_pool_preserves_order(self):
        target = LikelihoodHierarchy([doubled], observations=[1.0, 1.0], noise_variance=0.1)
        points = rqmc_rule(2, 12, seed=2).points
        with LikelihoodEvaluator(target, workers=2) as evaluator:
            values, _ = evaluator.evaluate(1, points)
        np.testing.assert_array_equal(values, target.log_likelihood_batch(1, points, counted=False))


class AnnealTests(TestCase):
    def test_budgeted_three_fidelity_run(self):
        target = analytic_targets(levels=3)["gaussian"]
        result = anneal(target, three_level_config())

        self.assertEqual(result.fidelities, [1, 1, 1, 1, 2, 3, 3])
        self.assertEqual(dict(result.evaluations), {1: 100, 2: 25, 3: 50})
        self.assertEqual(target.counts(), {1: 100, 2: 25, 3: 50})
        self.assertEqual([row.new_evaluations for row in result.diagnostics], [25] * 7)
        self.assertEqual(result.diagnostics[-1].cumulative_evaluations, {1: 100, 2: 25, 3: 50})

        betas = result.betas
        self.assertTrue(np.all(np.diff(betas) >= 0.0))
        self.assertEqual(betas[3], 0.5)
        self.assertEqual(betas[4], 0.8)
        self.assertEqual(betas[-1], 1.0)
        caps = {1: 0.5, 2: 0.8, 3: 1.0}
        for row in result.diagnostics:
            self.assertLessEqual(row.beta, caps[row.fidelity])

    def test_memos_reset_at_fidelity_changes(self):
        target = analytic_targets(levels=3)["gaussian"]
        sizes = []
        anneal(target, three_level_config(), on_step=lambda state, row: sizes.append(len(state.memos)))
        self.assertEqual(sizes, [1, 2, 3, 4, 1, 1, 2])

    def test_rule_grows_with_memos(self):
        target = analytic_targets(levels=3)["gaussian"]
        result = anneal(target, three_level_config())
        self.assertEqual(len(result.memos), 2)
        self.assertTrue(all(memo.fidelity == 3 for memo in result.memos))
        self.assertEqual(result.rule.size, 50)
        self.assertAlmostEqual(float(result.rule.weights.sum()), 1.0, places=12)

    def test_adaptive_single_fidelity_ends_at_one(self):
        target = analytic_targets()["gaussian"]
        result = anneal(target, AnnealConfig(sample_counts=64, fit=QUICK_FIT, refine_steps=1))
        betas = result.betas
        self.assertTrue(np.all(np.diff(betas) >= 0.0))
        self.assertEqual(betas[-1], 1.0)
        self.assertEqual(betas[-2], 1.0)
        self.assertEqual(target.counts(), {1: 64 * len(betas)})

    def test_two_step_gaussian_mean(self):
        target = analytic_targets()["gaussian"]
        config = AnnealConfig(sample_counts=64, steps_per_fidelity=(2,), orders=3)
        result = anneal(target, config)
        self.assertEqual(len(result.diagnostics), 2)

        oracle = grid_moments(target, m=200).mean
        mean, covariance = weighted_moments(result.rule)
        se = np.sqrt(np.diag(covariance) / (ress(result.rule) * result.rule.size))
        self.assertTrue(np.all(np.abs(mean - oracle) <= 3.0 * se))
        np.testing.assert_allclose(sample(result.surrogate, 2048, seed=0).mean(axis=0), oracle, atol=0.1)

    def test_deterministic(self):
        first = anneal(analytic_targets(levels=3)["bimodal"], three_level_config())
        second = anneal(analytic_targets(levels=3)["bimodal"], three_level_config())
        self.assertEqual([r.beta for r in first.diagnostics], [r.beta for r in second.diagnostics])
        self.assertEqual([r.ress for r in first.diagnostics], [r.ress for r in second.diagnostics])
        np.testing.assert_array_equal(first.surrogate.map.coefficients, second.surrogate.map.coefficients)

    def test_resume_matches_uninterrupted_run(self):
        class Interrupt(Exception):
            pass

        def stop_after_three(state, row):
            if row.step == 3:
                raise Interrupt

        config = three_level_config()
        full = anneal(analytic_targets(levels=3)["gaussian"], config)

        target = analytic_targets(levels=3)["gaussian"]
        captured = {}

        def capture(state, row):
            captured["state"] = state
            stop_after_three(state, row)

        with self.assertRaises(Interrupt):
            anneal(target, config, on_step=capture)
        resumed = anneal(target, config, state=captured["state"])

        self.assertEqual([r.beta for r in resumed.diagnostics], [r.beta for r in full.diagnostics])
        np.testing.assert_array_equal(resumed.surrogate.map.coefficients, full.surrogate.map.coefficients)
        self.assertEqual(target.counts(), {1: 100, 2: 25, 3: 50})

    def test_failed_fit_reports_step(self):
        target = analytic_targets()["gaussian"]
        config = AnnealConfig(sample_counts=32, fit=FitConfig(steps=50, step_size=1e8))
        with self.assertRaises(AnnealStepError) as caught:
            anneal(target, config)
        self.assertEqual(caught.exception.step, 1)
        self.assertEqual(caught.exception.fidelity, 1)
        self.assertEqual(caught.exception.diagnostics, ())

    def test_rejects_level_mismatch(self):
        with self.assertRaises(ContractViolationError):
            anneal(analytic_targets(levels=2)["gaussian"], AnnealConfig())

    def test_ress_band_policy_changes_order(self):
        target = analytic_targets()["banana"]
        config = AnnealConfig(
            sample_counts=32, orders=3, steps_per_fidelity=(3,), order_policy="ress_bands", fit=QUICK_FIT
        )
        result = anneal(target, config)
        orders = [row.order for row in result.diagnostics]
        self.assertEqual(orders[0], 3)
        for previous, row in zip(orders, result.diagnostics[1:]):
            self.assertEqual(row.order, banded_order(previous, row.ress))

    def test_parameter_ratio_caps_order(self):
        target = analytic_targets(levels=3)["gaussian"]
        result = anneal(target, three_level_config(orders=7, max_parameter_ratio=0.5))
        rule_sizes = [25, 50, 75, 100, 25, 25, 50]
        for row, size in zip(result.diagnostics, rule_sizes):
            self.assertTrue(row.order == 1 or row.parameter_count <= 0.5 * row.ress * size, row)
        self.assertLess(result.diagnostics[0].order, 7)

    def test_cached_rerun_reports_rule_points(self):
        store = DictStore()
        target = analytic_targets(levels=3)["gaussian"]
        anneal(target, three_level_config(), evaluator=LikelihoodEvaluator(target, store=store))
        before = target.counts()

        rerun = anneal(target, three_level_config(), evaluator=LikelihoodEvaluator(target, store=store))
        self.assertEqual(target.counts(), before)
        self.assertEqual([row.new_evaluations for row in rerun.diagnostics], [25] * 7)
        self.assertEqual(rerun.diagnostics[-1].cumulative_evaluations, {1: 100, 2: 25, 3: 50})
