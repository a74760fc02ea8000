from __future__ import annotations

from unittest import TestCase

import numpy as np

from annealmap.exceptions import ContractViolationError, DegenerateRuleError
from forward_models.services import analytic_targets, grid_moments
from metrics import weighted_moments
from quadrature import ress, rqmc_rule
from transport import Surrogate, TriangularMap, UniformPrior
from transport.services import log_pullback, pull_back_points

from .models import StageMemo
from .services import assemble_rule, mis_quadrature, power_heuristic, prepare_mis, snis_reweight


def prior_memo(target, n: int, seed: int, fidelity: int = 1) -> StageMemo:
    rule = rqmc_rule(2, n, seed)
    return StageMemo(
        surrogate=UniformPrior(2),
        points=rule.points,
        base_weights=rule.weights,
        log_likelihood=target.log_likelihood_batch(fidelity, rule.points),
        fidelity=fidelity,
    )


def surrogate_memo(target, n: int, seed: int, coefficients_seed: int = 5) -> StageMemo:
    identity = TriangularMap.identity(2, 3)
    rng = np.random.default_rng(coefficients_seed)
    surrogate = Surrogate(map=identity.with_coefficients(0.3 * rng.standard_normal(identity.parameter_count)))
    rule = rqmc_rule(2, n, seed)
    points = pull_back_points(surrogate, rule.points)
    return StageMemo(
        surrogate=surrogate,
        points=points,
        base_weights=rule.weights,
        log_likelihood=target.log_likelihood_batch(1, points),
        fidelity=1,
    )


def standard_errors(rule) -> np.ndarray:
    _, covariance = weighted_moments(rule)
    return np.sqrt(np.diag(covariance) / (ress(rule) * rule.size))


class PowerHeuristicTests(TestCase):
    def test_two_stage_vector(self):
        partition = power_heuristic(np.log([[0.25], [0.75]]), [1, 2], 2.0)
        self.assertAlmostEqual(float(partition[0, 0]), 0.0625 / (0.0625 + 2.25), places=12)
        self.assertAlmostEqual(float(partition[0, 0]), 0.027, places=3)

    def test_identical_stages_share_equally(self):
        log_densities = np.log(np.full((4, 7), 0.6))
        partition = power_heuristic(log_densities, [10, 10, 10, 10])
        np.testing.assert_allclose(partition, 0.25, atol=1e-15)

    def test_partition_of_unity(self):
        rng = np.random.default_rng(2)
        log_densities = rng.normal(size=(3, 50))
        partition = power_heuristic(log_densities, [5, 8, 13], 2.0)
        np.testing.assert_allclose(partition.sum(axis=0), 1.0, atol=1e-12)
        self.assertTrue(np.all(partition >= 0.0))

    def test_zero_density_gets_zero_share(self):
        log_densities = np.array([[-np.inf, 0.0], [0.0, 0.0]])
        partition = power_heuristic(log_densities, [1, 1])
        self.assertEqual(float(partition[0, 0]), 0.0)
        self.assertEqual(float(partition[1, 0]), 1.0)


class StageMemoTests(TestCase):
    def test_rejects_length_mismatch(self):
        with self.assertRaises(ContractViolationError):
            StageMemo(UniformPrior(2), np.full((3, 2), 0.5), np.ones(2), np.zeros(3), 1)

    def test_rejects_positive_infinity(self):
        with self.assertRaises(ContractViolationError):
            StageMemo(UniformPrior(2), np.full((2, 2), 0.5), np.ones(2), [0.0, np.inf], 1)


class MisQuadratureTests(TestCase):
    def setUp(self):
        self.targets = analytic_targets()

    def test_single_prior_memo_is_tempered_base_rule(self):
        memo = prior_memo(self.targets["gaussian"], 64, seed=1)
        rule = mis_quadrature(0.5, [memo])
        expected = memo.base_weights * np.exp(0.5 * memo.log_likelihood)
        np.testing.assert_allclose(rule.weights, expected / expected.sum(), atol=1e-14)
        self.assertTrue(rule.normalized)

    def test_snis_matches_single_memo(self):
        memo = surrogate_memo(self.targets["gaussian"], 64, seed=1)
        np.testing.assert_array_equal(snis_reweight(memo, 0.7).weights, mis_quadrature(0.7, [memo]).weights)

    def test_single_surrogate_memo_divides_by_density(self):
        memo = surrogate_memo(self.targets["gaussian"], 32, seed=3)
        rule = mis_quadrature(1.0, [memo])
        log_v = log_pullback(memo.surrogate, memo.points)
        expected = np.exp(memo.log_likelihood - log_v)
        np.testing.assert_allclose(rule.weights, expected / expected.sum(), rtol=1e-10)

    def test_scale_invariance(self):
        target = self.targets["bimodal"]
        memos = [prior_memo(target, 64, seed=0), surrogate_memo(target, 64, seed=1)]
        shifted = [
            StageMemo(m.surrogate, m.points, m.base_weights, m.log_likelihood + 17.0, m.fidelity) for m in memos
        ]
        np.testing.assert_allclose(
            mis_quadrature(0.6, memos).weights, mis_quadrature(0.6, shifted).weights, atol=1e-12
        )

    def test_small_beta_reverts_to_base_weights(self):
        memo = prior_memo(self.targets["gaussian"], 64, seed=2)
        rule = mis_quadrature(1e-12, [memo])
        np.testing.assert_allclose(rule.weights, memo.base_weights, atol=1e-12)

    def test_constant_likelihood(self):
        rule = rqmc_rule(2, 16, seed=4)
        memo = StageMemo(UniformPrior(2), rule.points, rule.weights, np.full(16, -3.0), 1)
        np.testing.assert_allclose(mis_quadrature(1.0, [memo]).weights, rule.weights, atol=1e-15)

    def test_rejects_mixed_fidelity(self):
        target = analytic_targets(levels=2)["gaussian"]
        with self.assertRaises(ContractViolationError):
            mis_quadrature(1.0, [prior_memo(target, 8, 0, fidelity=1), prior_memo(target, 8, 1, fidelity=2)])

    def test_rejects_empty_and_bad_beta(self):
        with self.assertRaises(ContractViolationError):
            mis_quadrature(1.0, [])
        memo = prior_memo(self.targets["gaussian"], 8, seed=0)
        for beta in (0.0, 1.5):
            with self.assertRaises(ContractViolationError):
                mis_quadrature(beta, [memo])

    def test_all_zero_likelihood_is_degenerate(self):
        rule = rqmc_rule(2, 8, seed=0)
        memo = StageMemo(UniformPrior(2), rule.points, rule.weights, np.full(8, -np.inf), 1)
        with self.assertRaises(DegenerateRuleError):
            mis_quadrature(1.0, [memo])

    def test_beta_sweep_needs_no_new_evaluations(self):
        target = self.targets["gaussian"]
        memos = [prior_memo(target, 64, seed=0), surrogate_memo(target, 64, seed=1)]
        before = target.counts()
        prepared = prepare_mis(memos)
        sizes = [ress(assemble_rule(prepared, beta)) for beta in np.linspace(0.025, 1.0, 40)]
        self.assertEqual(target.counts(), before)
        self.assertTrue(all(0.0 < s <= 1.0 for s in sizes))

    def test_gaussian_posterior_mean(self):
        target = self.targets["gaussian"]
        rule = mis_quadrature(1.0, [prior_memo(target, 4096, seed=7)])
        mean, _ = weighted_moments(rule)
        oracle = grid_moments(target, m=200).mean
        self.assertTrue(np.all(np.abs(mean - oracle) <= 3.0 * standard_errors(rule)))

    def test_bimodal_two_stage_mean(self):
        target = self.targets["bimodal"]
        oracle = grid_moments(target).mean
        first = prior_memo(target, 2048, seed=11)
        second = surrogate_memo(target, 2048, seed=12)

        combined = mis_quadrature(1.0, [first, second])
        mean, _ = weighted_moments(combined)
        error = float(np.max(np.abs(mean - oracle)))
        se = standard_errors(combined)
        self.assertTrue(np.all(np.abs(mean - oracle) <= 3.0 * se))

        single_errors = [
            float(np.max(np.abs(weighted_moments(snis_reweight(memo, 1.0))[0] - oracle))) for memo in (first, second)
        ]
        self.assertLessEqual(error, 2.0 * min(single_errors) + float(np.max(se)))

    def test_two_stage_means_across_seeds(self):
        for name in ("gaussian", "bimodal"):
            target = self.targets[name]
            oracle = grid_moments(target, m=400).mean
            passes = 0
            for seed in range(20):
                memos = [prior_memo(target, 512, seed=2 * seed), surrogate_memo(target, 512, seed=2 * seed + 1)]
                rule = mis_quadrature(1.0, memos)
                mean, _ = weighted_moments(rule)
                passes += bool(np.all(np.abs(mean - oracle) <= 3.0 * standard_errors(rule)))
            with self.subTest(target=name):
                self.assertGreaterEqual(passes, 18)
