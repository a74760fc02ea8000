from __future__ import annotations

from unittest import TestCase

import numpy as np

from annealmap.exceptions import ContractViolationError
from forward_models.services import analytic_targets
from quadrature import QuadratureRule, midpoint_grid_rule, normalize, rqmc_rule
from transport import Surrogate, TriangularMap, UniformPrior
from transport.services import component_forward, map_inverse, sample

from .exceptions import FitAbortedError
from .models import FitConfig
from .services import fit, loss, loss_gradient


def bump_rule(n: int = 1024, seed: int = 0) -> QuadratureRule:
    target = analytic_targets()["gaussian"]
    rule = rqmc_rule(2, n, seed)
    log_values = target.log_likelihood_batch(1, rule.points, counted=False)
    return normalize(rule.with_weights(rule.weights * np.exp(log_values - log_values.max()), normalized=False))


def linear_density_rule(m: int = 512) -> QuadratureRule:
    """Midpoint rule on [0,1] reweighted toward the density 2 theta."""
    grid = midpoint_grid_rule(1, m)
    return normalize(grid.with_weights(2.0 * grid.points[:, 0], normalized=False))


class FitConfigTests(TestCase):
    def test_defaults(self):
        config = FitConfig()
        self.assertEqual(config.steps, 1000)
        self.assertEqual(config.regularization, 1e-3)

    def test_rejects_invalid(self):
        for kwargs in ({"steps": 0}, {"step_size": 0.0}, {"regularization": -1.0}, {"momentum": 1.0}):
            with self.assertRaises(ContractViolationError):
                FitConfig(**kwargs)


class LossTests(TestCase):
    def setUp(self):
        self.family = TriangularMap.identity(2, 3)
        self.rule = bump_rule(128)
        rng = np.random.default_rng(1)
        self.coefficients = 0.2 * rng.standard_normal(self.family.parameter_count)

    def test_identity_on_uniform_prior_is_zero(self):
        value = loss(np.zeros(self.family.parameter_count), self.rule, self.family, UniformPrior(2))
        self.assertAlmostEqual(value, 0.0, places=12)

    def test_permutation_invariance(self):
        order = np.random.default_rng(0).permutation(self.rule.size)
        shuffled = QuadratureRule(self.rule.points[order], self.rule.weights[order], normalized=True)
        self.assertAlmostEqual(
            loss(self.coefficients, self.rule, self.family, UniformPrior(2)),
            loss(self.coefficients, shuffled, self.family, UniformPrior(2)),
            places=12,
        )

    def test_gradient_matches_finite_differences(self):
        references = [UniformPrior(2), Surrogate(map=self.family.with_coefficients(-0.5 * self.coefficients))]
        for reference in references:
            analytic = loss_gradient(self.coefficients, self.rule, self.family, reference)
            step = 1e-5
            numeric = np.empty_like(analytic)
            for i in range(self.family.parameter_count):
                shift = np.zeros_like(self.coefficients)
                shift[i] = step
                numeric[i] = (
                    loss(self.coefficients + shift, self.rule, self.family, reference)
                    - loss(self.coefficients - shift, self.rule, self.family, reference)
                ) / (2.0 * step)
            np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-8)

    def test_symmetric_rule_odd_basis_gradient_vanishes(self):
        family = TriangularMap.identity(1, 4)
        gradient = loss_gradient(np.zeros(4), midpoint_grid_rule(1, 64), family, UniformPrior(1))
        # Components 2 and 4 have derivatives odd about 1/2.
        np.testing.assert_allclose(gradient[[1, 3]], 0.0, atol=1e-12)

    def test_zero_weight_points_ignored(self):
        extra = np.vstack([self.rule.points, [[0.01, 0.99], [0.5, 0.5]]])
        padded = QuadratureRule(extra, np.concatenate([self.rule.weights, [0.0, 0.0]]), normalized=True)
        self.assertAlmostEqual(
            loss(self.coefficients, self.rule, self.family, UniformPrior(2)),
            loss(self.coefficients, padded, self.family, UniformPrior(2)),
            places=14,
        )

    def test_requires_normalized_rule(self):
        raw = self.rule.with_weights(self.rule.weights * 2.0, normalized=False)
        with self.assertRaises(ContractViolationError):
            loss(self.coefficients, raw, self.family, UniformPrior(2))


class FitTests(TestCase):
    def test_uniform_rule_stays_near_identity(self):
        family = TriangularMap.identity(2, 3)
        _, report = fit(rqmc_rule(2, 256, seed=0), family, UniformPrior(2), FitConfig(steps=200))
        self.assertLessEqual(report.coefficient_norm, 0.1)
        self.assertGreaterEqual(report.final_loss, -0.01)

    def test_loss_and_fit_never_evaluate_the_target(self):
        target = analytic_targets()["gaussian"]
        grid = rqmc_rule(2, 128, seed=4)
        log_values = target.log_likelihood_batch(1, grid.points)
        rule = normalize(grid.with_weights(np.exp(log_values - log_values.max()), normalized=False))
        self.assertEqual(target.counts(), {1: 128})

        family = TriangularMap.identity(2, 3)
        coefficients = np.full(family.parameter_count, 0.05)
        loss(coefficients, rule, family, UniformPrior(2))
        loss_gradient(coefficients, rule, family, UniformPrior(2))
        fit(rule, family, UniformPrior(2), FitConfig(steps=25))
        self.assertEqual(target.counts(), {1: 128})

    def test_loss_decreases_early(self):
        family = TriangularMap.identity(2, 4)
        _, report = fit(bump_rule(512), family, UniformPrior(2), FitConfig(steps=20))
        self.assertLess(report.losses[10], report.losses[0])
        self.assertEqual(len(report.losses), 20)
        self.assertEqual(report.parameter_count, 14)

    def test_bump_mean(self):
        family = TriangularMap.identity(2, 4)
        surrogate, _ = fit(bump_rule(1024), family, UniformPrior(2), FitConfig(steps=2000, step_size=2e-3))
        mean = sample(surrogate, 4096, seed=3).mean(axis=0)
        np.testing.assert_allclose(mean, [0.4, 0.6], atol=0.05)

    def test_regularization_shrinks_coefficients(self):
        family = TriangularMap.identity(2, 3)
        rule = bump_rule(256)
        norms = [
            fit(rule, family, UniformPrior(2), FitConfig(steps=300, regularization=lam))[1].coefficient_norm
            for lam in (1e-3, 2e-3, 4e-3)
        ]
        self.assertGreaterEqual(norms[0] + 1e-9, norms[1])
        self.assertGreaterEqual(norms[1] + 1e-9, norms[2])

    def test_weight_rescaling_invariance(self):
        family = TriangularMap.identity(2, 3)
        grid = rqmc_rule(2, 128, seed=2)
        raw = np.exp(-np.sum((grid.points - 0.3) ** 2, axis=1) / 0.1)
        config = FitConfig(steps=50)
        first = fit(normalize(grid.with_weights(raw, normalized=False)), family, UniformPrior(2), config)[1]
        second = fit(normalize(grid.with_weights(7.0 * raw, normalized=False)), family, UniformPrior(2), config)[1]
        np.testing.assert_allclose(first.coefficients, second.coefficients, atol=1e-8)

    def test_linear_density_recovers_square_cdf(self):
        family = TriangularMap.identity(1, 5)
        config = FitConfig(steps=4000, step_size=5e-3, regularization=0.0)
        surrogate, _ = fit(linear_density_rule(), family, UniformPrior(1), config)

        self.assertAlmostEqual(float(map_inverse(surrogate.map, np.array([[0.25]]))[0, 0]), 0.5, delta=5e-2)

        draws = np.sort(sample(surrogate, 512, seed=9)[:, 0])
        empirical = np.arange(1, 513) / 512
        self.assertLessEqual(float(np.max(np.abs(empirical - draws**2))), 0.05 + 1 / 512)

        theta = np.linspace(0.0, 1.0, 101)[:, None]
        forward = component_forward(surrogate.map.components[0], theta)
        self.assertLess(float(np.max(np.abs(forward - theta[:, 0] ** 2))), 0.05)

    def test_diverging_fit_aborts(self):
        family = TriangularMap.identity(2, 4)
        with self.assertRaises(FitAbortedError) as caught:
            fit(bump_rule(256), family, UniformPrior(2), FitConfig(steps=50, step_size=1e8))
        self.assertGreaterEqual(caught.exception.iterate, 1)
        self.assertEqual(caught.exception.points.shape[1], 2)

    def test_rejects_wrong_initial_length(self):
        family = TriangularMap.identity(2, 3)
        with self.assertRaises(ContractViolationError):
            fit(bump_rule(64), family, UniformPrior(2), FitConfig(steps=1, initial_coefficients=(0.0,)))
