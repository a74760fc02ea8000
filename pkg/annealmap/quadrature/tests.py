from __future__ import annotations

import tempfile
from pathlib import Path
from unittest import TestCase

import numpy as np

from annealmap.exceptions import (
    CapabilityError,
    ContractViolationError,
    DegenerateRuleError,
    DomainError,
)

from .models import QuadratureRule
from .services import (
    gauss_legendre_rule,
    midpoint_grid_rule,
    normalize,
    padding_for,
    read_rule_csv,
    ress,
    rqmc_rule,
    star_discrepancy,
    uniform_random_rule,
    write_rule_csv,
)


class QuadratureRuleModelTests(TestCase):
    def test_rejects_points_outside_cube(self):
        with self.assertRaises(DomainError):
            QuadratureRule(points=[[0.5, 1.5]], weights=[1.0])

    def test_rejects_negative_weights(self):
        with self.assertRaises(ContractViolationError):
            QuadratureRule(points=[[0.1], [0.2]], weights=[1.0, -0.5])

    def test_rejects_length_mismatch(self):
        with self.assertRaises(ContractViolationError):
            QuadratureRule(points=[[0.1], [0.2]], weights=[1.0])

    def test_normalized_flag_checked(self):
        with self.assertRaises(ContractViolationError):
            QuadratureRule(points=[[0.1], [0.2]], weights=[0.5, 0.6], normalized=True)

    def test_arrays_are_read_only(self):
        rule = QuadratureRule(points=[[0.1], [0.2]], weights=[0.5, 0.5], normalized=True)
        with self.assertRaises(ValueError):
            rule.weights[0] = 1.0


class RqmcRuleTests(TestCase):
    def test_padding_two_dimensions_twenty_five_points(self):
        self.assertEqual(padding_for(2, 25), (3, 3))

    def test_padding_prime_above_dimension(self):
        self.assertEqual(padding_for(1, 1), (2, 1))
        self.assertEqual(padding_for(3, 10), (5, 2))
        self.assertEqual(padding_for(4, 25), (5, 3))

    def test_twenty_five_points_equal_weights(self):
        rule = rqmc_rule(2, 25, seed=7)
        self.assertEqual(rule.size, 25)
        self.assertEqual(rule.dimension, 2)
        self.assertTrue(rule.normalized)
        np.testing.assert_allclose(rule.weights, 0.04)

    def test_single_point(self):
        rule = rqmc_rule(1, 1, seed=3)
        self.assertEqual(rule.size, 1)
        self.assertEqual(float(rule.weights[0]), 1.0)
        self.assertTrue(0.0 <= rule.points[0, 0] <= 1.0)

    def test_bit_identical_for_fixed_seed(self):
        first = rqmc_rule(3, 100, seed=11)
        second = rqmc_rule(3, 100, seed=11)
        self.assertTrue(np.array_equal(first.points, second.points))

    def test_seed_changes_points(self):
        first = rqmc_rule(2, 32, seed=1)
        second = rqmc_rule(2, 32, seed=2)
        self.assertFalse(np.array_equal(first.points, second.points))

    def test_prefix_property(self):
        long_rule = rqmc_rule(2, 200, seed=5)
        short_rule = rqmc_rule(2, 130, seed=5)
        self.assertTrue(np.array_equal(long_rule.points[:130], short_rule.points))

    def test_points_in_open_cube(self):
        rule = rqmc_rule(4, 500, seed=0)
        self.assertTrue(np.all(rule.points > 0.0))
        self.assertTrue(np.all(rule.points < 1.0))

    def test_mean_and_discrepancy_beat_random(self):
        rule = rqmc_rule(2, 256, seed=4)
        np.testing.assert_allclose(rule.points.mean(axis=0), 0.5, atol=0.01)
        baseline = uniform_random_rule(2, 256, seed=4)
        self.assertLess(star_discrepancy(rule), star_discrepancy(baseline))

    def test_one_point_per_stratum(self):
        # A scrambled base-2 net keeps one point in each dyadic interval.
        rule = rqmc_rule(1, 64, seed=9)
        cells = np.floor(rule.points[:, 0] * 64).astype(int)
        self.assertEqual(sorted(cells.tolist()), list(range(64)))

    def test_rejects_high_dimension(self):
        with self.assertRaises(CapabilityError):
            rqmc_rule(21, 10, seed=0)

    def test_rejects_empty_rule(self):
        with self.assertRaises(ContractViolationError):
            rqmc_rule(2, 0, seed=0)


class WeightDiagnosticsTests(TestCase):
    def _rule(self, weights, normalized=True):
        n = len(weights)
        points = (np.arange(n)[:, None] + 0.5) / n
        return QuadratureRule(points=points, weights=weights, normalized=normalized)

    def test_ress_uniform(self):
        self.assertAlmostEqual(ress(self._rule([0.25] * 4)), 1.0, places=14)

    def test_ress_one_hot(self):
        self.assertAlmostEqual(ress(self._rule([1.0, 0.0, 0.0, 0.0])), 0.25, places=14)

    def test_ress_two_points(self):
        self.assertAlmostEqual(ress(self._rule([0.7, 0.3])), 1.0 / 1.16, places=12)

    def test_ress_requires_normalized(self):
        with self.assertRaises(ContractViolationError):
            ress(self._rule([1.0, 2.0], normalized=False))

    def test_normalize_scales(self):
        np.testing.assert_allclose(normalize(self._rule([2.0, 2.0], normalized=False)).weights, [0.5, 0.5])
        np.testing.assert_allclose(normalize(self._rule([1.0, 3.0], normalized=False)).weights, [0.25, 0.75])

    def test_normalize_idempotent(self):
        rule = self._rule([0.2, 0.8])
        self.assertIs(normalize(rule), rule)

    def test_normalize_zero_weights(self):
        with self.assertRaises(DegenerateRuleError):
            normalize(self._rule([0.0, 0.0], normalized=False))

    def test_ress_bounds_after_normalize(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            weights = rng.random(10) ** 4
            value = ress(normalize(self._rule(weights, normalized=False)))
            self.assertGreaterEqual(value, 0.1 - 1e-12)
            self.assertLessEqual(value, 1.0 + 1e-12)


class TensorRuleTests(TestCase):
    def test_gauss_legendre_integrates_polynomials(self):
        rule = gauss_legendre_rule(2, 5)
        values = rule.points[:, 0] ** 3 * rule.points[:, 1] ** 2
        self.assertAlmostEqual(float(values @ rule.weights), 1.0 / 12.0, places=13)

    def test_midpoint_grid_size(self):
        rule = midpoint_grid_rule(2, 10)
        self.assertEqual(rule.size, 100)
        np.testing.assert_allclose(rule.points.mean(axis=0), 0.5)


class RuleCsvTests(TestCase):
    def test_csv_reload_is_exact(self):
        rule = rqmc_rule(2, 40, seed=13)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "rule.csv"
            write_rule_csv(rule, path)
            header = path.read_text().splitlines()[0]
            self.assertEqual(header, "theta_1,theta_2,weight")
            reloaded = read_rule_csv(path)
        self.assertTrue(np.array_equal(reloaded.points, rule.points))
        self.assertTrue(np.array_equal(reloaded.weights, rule.weights))
