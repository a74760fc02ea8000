from __future__ import annotations

import math
from unittest import TestCase

import numpy as np

from annealmap.exceptions import ContractViolationError
from forward_models.services import analytic_targets, grid_moments
from quadrature import QuadratureRule, midpoint_grid_rule, rqmc_rule
from transport import Surrogate, TriangularMap
from transport.services import pullback_quadrature

from .exceptions import DegenerateCovarianceError
from .models import KernelSpec
from .services import (
    forstner,
    kernel_matrix,
    mmd2,
    reference_posterior_rule,
    relative_errors,
    weighted_moments,
)


class WeightedMomentsTests(TestCase):
    def test_uniform_weights_unbiased(self):
        rule = rqmc_rule(2, 30, seed=3)
        mean, covariance = weighted_moments(rule)
        np.testing.assert_allclose(mean, rule.points.mean(axis=0))
        np.testing.assert_allclose(covariance, np.cov(rule.points.T, ddof=1), atol=1e-14)

    def test_identical_points(self):
        rule = QuadratureRule(points=np.full((4, 2), 0.3), weights=np.full(4, 0.25), normalized=True)
        _, covariance = weighted_moments(rule)
        np.testing.assert_array_equal(covariance, np.zeros((2, 2)))

    def test_uniform_grid(self):
        _, covariance = weighted_moments(midpoint_grid_rule(2, 100))
        np.testing.assert_allclose(covariance, np.diag([1 / 12, 1 / 12]), atol=1e-3)

    def test_single_effective_point(self):
        rule = QuadratureRule(points=[[0.1, 0.2], [0.3, 0.4]], weights=[1.0, 0.0], normalized=True)
        with self.assertRaises(DegenerateCovarianceError):
            weighted_moments(rule)

    def test_identity_pullback_matches(self):
        reference = rqmc_rule(2, 64, seed=1)
        moved = pullback_quadrature(Surrogate(map=TriangularMap.identity(2, 3)), reference)
        mean_a, cov_a = weighted_moments(moved)
        mean_b, cov_b = weighted_moments(reference)
        np.testing.assert_allclose(mean_a, mean_b, atol=1e-9)
        np.testing.assert_allclose(cov_a, cov_b, atol=1e-9)


class ForstnerTests(TestCase):
    def test_identical(self):
        c = np.array([[2.0, 0.3], [0.3, 1.0]])
        self.assertAlmostEqual(forstner(c, c), 0.0, places=12)

    def test_scaled_identity(self):
        self.assertAlmostEqual(forstner(np.eye(2), 4.0 * np.eye(2)), math.sqrt(2.0) * math.log(4.0), places=12)
        self.assertAlmostEqual(forstner(np.eye(2), 4.0 * np.eye(2)), 1.9605, places=4)

    def test_symmetric(self):
        a = np.array([[1.0, 0.2], [0.2, 0.5]])
        b = np.array([[0.3, -0.1], [-0.1, 0.8]])
        self.assertAlmostEqual(forstner(a, b), forstner(b, a), places=12)

    def test_congruence_invariance(self):
        a = np.array([[1.0, 0.2], [0.2, 0.5]])
        b = np.array([[0.3, -0.1], [-0.1, 0.8]])
        t = np.array([[2.0, 1.0], [0.5, 3.0]])
        self.assertAlmostEqual(forstner(t.T @ a @ t, t.T @ b @ t), forstner(a, b), delta=1e-10)

    def test_rejects_non_spd(self):
        with self.assertRaises(ContractViolationError):
            forstner(np.array([[1.0, 2.0], [2.0, 1.0]]), np.eye(2))


class MmdTests(TestCase):
    def test_identical_rules(self):
        rule = rqmc_rule(2, 50, seed=4)
        for family in ("gaussian", "matern15"):
            self.assertAlmostEqual(mmd2(rule, rule, KernelSpec(family=family)), 0.0, delta=1e-12)

    def test_point_masses(self):
        first = QuadratureRule(points=[[0.2, 0.2]], weights=[1.0], normalized=True)
        second = QuadratureRule(points=[[0.23, 0.24]], weights=[1.0], normalized=True)
        for family in ("gaussian", "matern15"):
            kernel = KernelSpec(family=family, bandwidth=0.05)
            k = float(kernel_matrix(first.points, second.points, kernel)[0, 0])
            self.assertAlmostEqual(mmd2(first, second, kernel), 2.0 * (1.0 - k), places=12)

    def test_kernel_closed_forms(self):
        origin = np.zeros((1, 2))
        shifted = np.array([[0.05, 0.0]])
        matern = KernelSpec(family="matern15", bandwidth=0.05)
        gaussian = KernelSpec(family="gaussian", bandwidth=0.05)
        self.assertEqual(float(kernel_matrix(origin, origin, matern)[0, 0]), 1.0)
        self.assertAlmostEqual(
            float(kernel_matrix(origin, shifted, matern)[0, 0]), (1 + math.sqrt(3)) * math.exp(-math.sqrt(3)), places=14
        )
        self.assertAlmostEqual(float(kernel_matrix(origin, shifted, gaussian)[0, 0]), math.exp(-0.5), places=14)

    def test_non_negative(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            a = QuadratureRule(points=rng.random((40, 2)), weights=np.full(40, 1 / 40), normalized=True)
            w = rng.random(30)
            b = QuadratureRule(points=rng.random((30, 2)), weights=w / w.sum(), normalized=True)
            self.assertGreaterEqual(mmd2(a, b, KernelSpec(family="matern15")), -1e-10)

    def test_rejects_bad_bandwidth(self):
        with self.assertRaises(ContractViolationError):
            KernelSpec(family="gaussian", bandwidth=0.0)


class RelativeErrorTests(TestCase):
    def setUp(self):
        self.target = analytic_targets()["gaussian"]
        self.reference = reference_posterior_rule(self.target, order=50)
        self.prior = rqmc_rule(2, 1024, seed=0)

    def test_prior_has_unit_errors(self):
        metrics = relative_errors(self.prior, self.prior, self.reference, self.prior)
        for value in metrics.as_row().values():
            self.assertAlmostEqual(value, 1.0, places=12)

    def test_reference_has_zero_errors(self):
        metrics = relative_errors(self.reference, self.reference, self.reference, self.prior)
        for value in metrics.as_row().values():
            self.assertAlmostEqual(value, 0.0, places=6)

    def test_reference_rule_matches_oracle(self):
        mean, _ = weighted_moments(self.reference)
        np.testing.assert_allclose(mean, grid_moments(self.target).mean, atol=1e-6)

    def test_reference_order_stable(self):
        coarse, _ = weighted_moments(reference_posterior_rule(self.target, order=50))
        fine, _ = weighted_moments(reference_posterior_rule(self.target, order=60))
        np.testing.assert_allclose(coarse, fine, atol=1e-6)

    def test_reference_uncounted(self):
        self.assertEqual(self.target.counts(), {1: 0})

    def test_zero_denominator_reported_absolute(self):
        symmetric = analytic_targets()["bimodal"]
        reference = reference_posterior_rule(symmetric, order=50)
        grid = midpoint_grid_rule(2, 40)
        metrics = relative_errors(grid, grid, reference, grid)
        self.assertIn("rmse", metrics.absolute)
        self.assertLess(metrics.rmse, 1e-10)

    def test_tiny_prior_offset_reported_absolute(self):
        symmetric = analytic_targets()["bimodal"]
        reference = reference_posterior_rule(symmetric, order=50)
        grid = midpoint_grid_rule(2, 40)
        nudged = QuadratureRule(points=grid.points + 1e-5, weights=grid.weights, normalized=True)
        metrics = relative_errors(nudged, nudged, reference, nudged)
        self.assertEqual(metrics.absolute, frozenset({"rmse"}))
        self.assertAlmostEqual(metrics.rmse, 1e-5, delta=1e-9)
        self.assertAlmostEqual(metrics.forstner, 1.0, places=9)
