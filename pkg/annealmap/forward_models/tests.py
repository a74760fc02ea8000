from __future__ import annotations

import math
import pickle
from unittest import TestCase

import numpy as np
from scipy import stats

from annealmap.exceptions import ContractViolationError, DomainError
from quadrature import rqmc_rule

from .exceptions import ForwardSolveError
from .models import DiffusionProblem, LikelihoodHierarchy, default_sensors
from .services import (
    analytic_targets,
    build_hierarchy,
    generate_data,
    grid_moments,
    grid_nodes,
    multi_source_problem,
    observe,
    single_source_problem,
    solve_poisson,
)


def identity_model(theta):
    return np.asarray(theta, dtype=float)


class LogLikelihoodTests(TestCase):
    def setUp(self):
        self.hierarchy = LikelihoodHierarchy([identity_model], [0.3, 0.4], 0.04)

    def test_zero_residual(self):
        self.assertEqual(self.hierarchy.log_likelihood(1, [0.3, 0.4]), 0.0)

    def test_residual_formula(self):
        value = self.hierarchy.log_likelihood(1, [0.6, 0.8])
        self.assertAlmostEqual(value, -(0.3**2 + 0.4**2) / 0.08, places=12)

    def test_counter_increments(self):
        self.hierarchy.log_likelihood(1, [0.5, 0.5])
        self.hierarchy.log_likelihood_batch(1, rqmc_rule(2, 7, seed=0).points)
        self.assertEqual(self.hierarchy.counts(), {1: 8})

    def test_uncounted_batch(self):
        self.hierarchy.log_likelihood_batch(1, rqmc_rule(2, 5, seed=0).points, counted=False)
        self.assertEqual(self.hierarchy.counts(), {1: 0})

    def test_tempering_broadens_covariance(self):
        beta = 0.3
        first = np.array([0.2, 0.9])
        second = np.array([0.7, 0.1])
        tempered = beta * (self.hierarchy.log_likelihood(1, first) - self.hierarchy.log_likelihood(1, second))
        scale = math.sqrt(0.04 / beta)
        y = np.array([0.3, 0.4])
        expected = np.sum(stats.norm.logpdf(y, first, scale)) - np.sum(stats.norm.logpdf(y, second, scale))
        self.assertAlmostEqual(tempered, expected, places=10)

    def test_rejects_unknown_level(self):
        with self.assertRaises(ContractViolationError):
            self.hierarchy.log_likelihood(2, [0.5, 0.5])

    def test_rejects_points_outside_cube(self):
        with self.assertRaises(DomainError):
            self.hierarchy.log_likelihood(1, [1.5, 0.5])

    def test_rejects_non_positive_variance(self):
        with self.assertRaises(ContractViolationError):
            LikelihoodHierarchy([identity_model], [0.3, 0.4], 0.0)


class PoissonSolveTests(TestCase):
    def setUp(self):
        self.problem = single_source_problem()

    def test_amplitude(self):
        self.assertAlmostEqual(self.problem.amplitude, 5.0 / (2.0 * math.pi * 0.15), places=12)

    def test_zero_amplitude(self):
        field_values = solve_poisson(self.problem, 32, [0.3, 0.6], amplitude=0.0)
        self.assertTrue(np.all(field_values == 0.0))

    def test_boundary_is_zero(self):
        field_values = solve_poisson(self.problem, 32, [0.3, 0.6])
        self.assertTrue(np.all(field_values[0, :] == 0.0))
        self.assertTrue(np.all(field_values[:, -1] == 0.0))

    def test_symmetric_source(self):
        field_values = solve_poisson(self.problem, 64, [0.5, 0.5])
        np.testing.assert_allclose(field_values, field_values.T, atol=1e-10)

    def test_second_order_convergence(self):
        theta = [0.35, 0.6]
        coarse = solve_poisson(self.problem, 32, theta)
        medium = solve_poisson(self.problem, 64, theta)
        fine = solve_poisson(self.problem, 128, theta)
        first = np.max(np.abs(medium[::2, ::2] - coarse))
        second = np.max(np.abs(fine[::4, ::4] - medium[::2, ::2]))
        self.assertGreater(first / second, 3.0)
        self.assertLess(first / second, 5.0)

    def test_deterministic(self):
        first = solve_poisson(self.problem, 64, [0.2, 0.7])
        second = solve_poisson(self.problem, 64, [0.2, 0.7])
        self.assertTrue(np.array_equal(first, second))

    def test_rejects_coarse_grid(self):
        with self.assertRaises(ContractViolationError):
            solve_poisson(self.problem, 4, [0.5, 0.5])

    def test_multi_source_adds_second_source(self):
        problem = multi_source_problem(resolutions=(16, 32, 64), data_resolution=64)
        single = solve_poisson(problem, 64, [0.15, 0.15], multi_source=False)
        double = solve_poisson(problem, 64, [0.15, 0.15])
        mirrored = solve_poisson(problem, 64, [0.85, 0.85], multi_source=False)
        np.testing.assert_allclose(double, single + mirrored, atol=1e-12)

    def test_error_survives_pickling(self):
        error = ForwardSolveError("boom", theta=[0.1, 0.2], fidelity=2, resolution=64, iterations=7)
        restored = pickle.loads(pickle.dumps(error))
        self.assertEqual(restored.iterations, 7)
        self.assertEqual(restored.fidelity, 2)


class ObserveTests(TestCase):
    def test_sensor_at_node(self):
        nodes = grid_nodes(10)
        field_values = np.random.default_rng(0).random((11, 11))
        value = observe(field_values, [[nodes[3], nodes[7]]])
        self.assertEqual(float(value[0]), field_values[3, 7])

    def test_constant_field(self):
        np.testing.assert_allclose(observe(np.full((17, 17), 2.5), default_sensors()), 2.5)

    def test_linear_field_exact(self):
        nodes = grid_nodes(16)
        grid_x, grid_y = np.meshgrid(nodes, nodes, indexing="ij")
        sensors = np.array([[0.13, 0.77], [0.5, 0.5], [0.91, 0.04]])
        np.testing.assert_allclose(observe(grid_x + grid_y, sensors), sensors.sum(axis=1), atol=1e-14)

    def test_sensor_outside_domain(self):
        with self.assertRaises(ContractViolationError):
            observe(np.zeros((9, 9)), [[1.2, 0.5]])

    def test_default_sensors(self):
        sensors = default_sensors()
        self.assertEqual(sensors.shape, (16, 2))
        self.assertAlmostEqual(float(sensors.min()), 0.2)
        self.assertAlmostEqual(float(sensors.max()), 0.8)


class DataGenerationTests(TestCase):
    def setUp(self):
        self.problem = single_source_problem(resolutions=(16, 32), data_resolution=64)

    def test_noiseless(self):
        data = generate_data(self.problem, (0.25, 0.75), 0.0, seed=1)
        expected = observe(solve_poisson(self.problem, 64, [0.25, 0.75]), self.problem.sensors)
        np.testing.assert_array_equal(data, expected)

    def test_noise_deterministic(self):
        first = generate_data(self.problem, (0.25, 0.75), 0.04, seed=3)
        second = generate_data(self.problem, (0.25, 0.75), 0.04, seed=3)
        np.testing.assert_array_equal(first, second)
        self.assertFalse(np.array_equal(first, generate_data(self.problem, (0.25, 0.75), 0.0, seed=3)))

    def test_multi_source_defaults(self):
        problem = multi_source_problem()
        self.assertTrue(problem.multi_source)
        self.assertEqual(problem.second_center, (0.85, 0.85))
        self.assertEqual(problem.resolutions, (16, 32, 128))

    def test_rejects_non_increasing_resolutions(self):
        with self.assertRaises(ContractViolationError):
            DiffusionProblem(resolutions=(32, 16))


class HierarchyTests(TestCase):
    def setUp(self):
        problem = single_source_problem(resolutions=(16, 32, 64), data_resolution=128)
        data = generate_data(problem, (0.25, 0.75), 0.0, seed=0)
        self.hierarchy = build_hierarchy(problem, data, 0.04)

    def test_levels(self):
        self.assertEqual(self.hierarchy.levels, (1, 2, 3))

    def test_fidelity_gaps_shrink(self):
        thetas = rqmc_rule(2, 8, seed=5).points
        gaps = []
        for level in (1, 2):
            gaps.append(
                np.mean(
                    [
                        np.linalg.norm(self.hierarchy.forward(level, theta) - self.hierarchy.forward(level + 1, theta))
                        for theta in thetas
                    ]
                )
            )
        self.assertGreater(gaps[0], gaps[1])

    def test_repeat_calls_bit_identical(self):
        theta = np.array([0.4, 0.45])
        self.assertTrue(np.array_equal(self.hierarchy.forward(2, theta), self.hierarchy.forward(2, theta)))


class AnalyticTargetTests(TestCase):
    def setUp(self):
        self.catalog = analytic_targets()

    def test_catalog_names(self):
        self.assertEqual(set(self.catalog), {"gaussian", "bimodal", "banana"})

    def test_gaussian_mean_is_center(self):
        moments = grid_moments(self.catalog["gaussian"])
        np.testing.assert_allclose(moments.mean, [0.4, 0.6], atol=1e-4)

    def test_mixture_mean_is_symmetric(self):
        moments = grid_moments(self.catalog["bimodal"])
        np.testing.assert_allclose(moments.mean, [0.5, 0.5], atol=1e-10)

    def test_banana_covariance_positive_definite(self):
        moments = grid_moments(self.catalog["banana"])
        self.assertTrue(np.all(np.linalg.eigvalsh(moments.covariance) > 0.0))

    def test_oracle_is_uncounted(self):
        target = self.catalog["gaussian"]
        grid_moments(target, m=50)
        self.assertEqual(target.counts(), {1: 0})
