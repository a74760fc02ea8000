from __future__ import annotations

import tempfile
from pathlib import Path
from unittest import TestCase

import numpy as np
from numpy.polynomial import legendre
from scipy import stats

from annealmap.exceptions import ContractViolationError, DomainError
from quadrature import QuadratureRule, midpoint_grid_rule, rqmc_rule

from .models import MapComponent, MultiIndexSet, Surrogate, TriangularMap, UniformPrior
from .services import (
    basis_eval,
    component_forward,
    dump_surrogate,
    dumps_surrogate,
    grad_input_log_density,
    grad_log_pullback,
    load_surrogate,
    loads_surrogate,
    log_pullback,
    map_forward,
    map_inverse,
    map_jacobian,
    pullback_quadrature,
    sample,
    shifted_legendre,
)


def random_map(dimension: int, order: int, seed: int, scale: float = 0.2) -> TriangularMap:
    identity = TriangularMap.identity(dimension, order)
    rng = np.random.default_rng(seed)
    return identity.with_coefficients(scale * rng.standard_normal(identity.parameter_count))


class MultiIndexSetTests(TestCase):
    def test_parameter_counts_two_dimensions(self):
        expected = {3: 9, 4: 14, 5: 20, 6: 27, 7: 35}
        for order, count in expected.items():
            self.assertEqual(TriangularMap.identity(2, order).parameter_count, count)

    def test_one_dimension(self):
        index_set = MultiIndexSet(dimension=1, order=5)
        self.assertEqual(index_set.cardinality, 5)
        self.assertEqual(len(index_set.indices), 5)

    def test_enumeration_matches_cardinality(self):
        for dimension in (1, 2, 3, 4):
            for order in (1, 3, 6):
                index_set = MultiIndexSet(dimension=dimension, order=order)
                self.assertEqual(index_set.indices.shape[0], index_set.cardinality)
                self.assertTrue(np.all(index_set.indices[:, -1] >= 1))
                self.assertTrue(np.all(index_set.indices.sum(axis=1) <= order))

    def test_rejects_zero_order(self):
        with self.assertRaises(ContractViolationError):
            MultiIndexSet(dimension=2, order=0)


class BasisTests(TestCase):
    def test_shifted_legendre_matches_numpy(self):
        t = np.linspace(0.0, 1.0, 11)
        values, first, second = shifted_legendre(t, 6)
        for k in range(7):
            coef = np.zeros(k + 1)
            coef[k] = 1.0
            np.testing.assert_allclose(values[:, k], legendre.legval(2 * t - 1, coef), atol=1e-12)
            np.testing.assert_allclose(
                first[:, k], 2.0 * legendre.legval(2 * t - 1, legendre.legder(coef)), atol=1e-11
            )
            np.testing.assert_allclose(
                second[:, k], 4.0 * legendre.legval(2 * t - 1, legendre.legder(coef, 2)), atol=1e-10
            )

    def test_basis_sizes(self):
        self.assertEqual(basis_eval(MultiIndexSet(dimension=1, order=5), [0.3]).shape, (5,))
        self.assertEqual(basis_eval(MultiIndexSet(dimension=2, order=4), [0.3, 0.6]).shape, (10,))

    def test_basis_product_form(self):
        index_set = MultiIndexSet(dimension=2, order=3)
        theta = np.array([0.2, 0.7])
        values, first, _ = shifted_legendre(theta, 3)
        expected = [values[0, a] * first[1, b] for a, b in index_set.indices]
        np.testing.assert_allclose(basis_eval(index_set, theta), expected)

    def test_basis_domain_error(self):
        with self.assertRaises(DomainError):
            basis_eval(MultiIndexSet(dimension=2, order=3), [0.5, 1.2])


class ComponentTests(TestCase):
    def test_zero_coefficients_identity(self):
        component = MapComponent.zeros(2, 4)
        points = rqmc_rule(2, 50, seed=1).points
        np.testing.assert_allclose(component_forward(component, points), points[:, 1], atol=1e-15)

    def test_boundary_pinning(self):
        transport_map = random_map(3, 5, seed=2)
        rng = np.random.default_rng(0)
        for component in transport_map.components:
            prefix = rng.random((20, component.dimension - 1))
            low = np.column_stack([prefix, np.zeros(20)])
            high = np.column_stack([prefix, np.ones(20)])
            np.testing.assert_allclose(component_forward(component, low), 0.0, atol=1e-12)
            np.testing.assert_allclose(component_forward(component, high), 1.0, atol=1e-12)

    def test_monotone_sweep(self):
        transport_map = random_map(2, 6, seed=3, scale=0.3)
        rng = np.random.default_rng(1)
        sweep = np.linspace(0.0, 1.0, 1000)
        for component in transport_map.components:
            for _ in range(5):
                prefix = np.tile(rng.random(component.dimension - 1), (1000, 1))
                values = component_forward(component, np.column_stack([prefix, sweep]))
                self.assertTrue(np.all(np.diff(values) > 0.0))

    def test_rejects_wrong_coefficient_count(self):
        with self.assertRaises(ContractViolationError):
            MapComponent(index_set=MultiIndexSet(dimension=2, order=3), coefficients=np.zeros(4), integration_nodes=10)

    def test_default_integration_nodes(self):
        self.assertEqual(MapComponent.zeros(1, 5).integration_nodes, 14)


class MapTests(TestCase):
    def test_identity_inverse(self):
        transport_map = TriangularMap.identity(2, 3)
        z = rqmc_rule(2, 30, seed=4).points
        np.testing.assert_allclose(map_inverse(transport_map, z), z, atol=1e-9)

    def test_round_trip(self):
        transport_map = random_map(2, 5, seed=5, scale=0.3)
        theta = rqmc_rule(2, 100, seed=6).points
        z = map_forward(transport_map, theta)
        self.assertLessEqual(np.max(np.abs(map_inverse(transport_map, z) - theta)), 1e-8)
        self.assertLessEqual(np.max(np.abs(map_forward(transport_map, map_inverse(transport_map, theta)) - theta)), 1e-8)

    def test_round_trip_three_dimensions(self):
        transport_map = random_map(3, 3, seed=7)
        theta = rqmc_rule(3, 100, seed=8).points
        recovered = map_inverse(transport_map, map_forward(transport_map, theta))
        self.assertLessEqual(np.max(np.abs(recovered - theta)), 1e-8)

    def test_jacobian_lower_triangular(self):
        transport_map = random_map(3, 4, seed=9)
        jacobian = map_jacobian(transport_map, rqmc_rule(3, 20, seed=1).points)
        self.assertTrue(np.all(np.triu(jacobian, k=1) == 0.0))
        self.assertTrue(np.all(np.diagonal(jacobian, axis1=1, axis2=2) > 0.0))

    def test_jacobian_matches_finite_differences(self):
        transport_map = random_map(2, 4, seed=10)
        theta = np.array([0.3, 0.6])
        jacobian = map_jacobian(transport_map, theta)[0]
        step = 1e-6
        for i in range(2):
            shift = np.zeros(2)
            shift[i] = step
            column = (map_forward(transport_map, theta + shift) - map_forward(transport_map, theta - shift)) / (2 * step)
            np.testing.assert_allclose(jacobian[:, i], column, rtol=1e-6, atol=1e-8)

    def test_rejects_points_outside_cube(self):
        with self.assertRaises(DomainError):
            map_forward(TriangularMap.identity(2, 3), [0.5, -0.1])


class PullbackDensityTests(TestCase):
    def test_identity_density_is_one(self):
        surrogate = Surrogate(map=TriangularMap.identity(2, 4))
        points = rqmc_rule(2, 64, seed=2).points
        np.testing.assert_allclose(log_pullback(surrogate, points), 0.0, atol=1e-14)

    def test_positive_on_open_cube(self):
        surrogate = Surrogate(map=random_map(2, 5, seed=11, scale=0.3))
        values = np.exp(log_pullback(surrogate, rqmc_rule(2, 500, seed=3).points))
        self.assertTrue(np.all(values > 0.0))

    def test_grid_normalization(self):
        surrogate = Surrogate(map=random_map(2, 4, seed=12))
        grid = midpoint_grid_rule(2, 200)
        mass = float(np.exp(log_pullback(surrogate, grid.points)) @ grid.weights)
        self.assertAlmostEqual(mass, 1.0, delta=1e-3)

    def test_composed_grid_normalization(self):
        inner = Surrogate(map=random_map(2, 3, seed=13))
        outer = Surrogate(map=random_map(2, 3, seed=14), reference=inner)
        self.assertEqual(outer.depth, 2)
        grid = midpoint_grid_rule(2, 200)
        mass = float(np.exp(log_pullback(outer, grid.points)) @ grid.weights)
        self.assertAlmostEqual(mass, 1.0, delta=1e-3)

    def test_uniform_prior_log_density(self):
        self.assertEqual(float(log_pullback(UniformPrior(2), [0.3, 0.4])), 0.0)


class GradientTests(TestCase):
    def _finite_difference(self, surrogate: Surrogate, theta: np.ndarray, step: float = 1e-5) -> np.ndarray:
        base = surrogate.map.coefficients
        out = np.zeros((theta.shape[0], base.shape[0]))
        for i in range(base.shape[0]):
            shift = np.zeros_like(base)
            shift[i] = step
            plus = Surrogate(map=surrogate.map.with_coefficients(base + shift), reference=surrogate.reference)
            minus = Surrogate(map=surrogate.map.with_coefficients(base - shift), reference=surrogate.reference)
            out[:, i] = (log_pullback(plus, theta) - log_pullback(minus, theta)) / (2 * step)
        return out

    def test_matches_finite_differences(self):
        surrogate = Surrogate(map=random_map(2, 4, seed=15))
        theta = rqmc_rule(2, 8, seed=5).points
        np.testing.assert_allclose(
            grad_log_pullback(surrogate, theta), self._finite_difference(surrogate, theta), rtol=1e-5, atol=1e-8
        )

    def test_matches_finite_differences_with_composed_reference(self):
        inner = Surrogate(map=random_map(2, 3, seed=16))
        surrogate = Surrogate(map=random_map(2, 4, seed=17), reference=inner)
        theta = rqmc_rule(2, 8, seed=6).points
        np.testing.assert_allclose(
            grad_log_pullback(surrogate, theta), self._finite_difference(surrogate, theta), rtol=1e-5, atol=1e-8
        )

    def test_finite_at_zero_coefficients(self):
        surrogate = Surrogate(map=TriangularMap.identity(1, 4))
        gradient = grad_log_pullback(surrogate, rqmc_rule(1, 16, seed=0).points)
        self.assertTrue(np.all(np.isfinite(gradient)))
        self.assertLess(np.max(np.abs(gradient)), 100.0)

    def test_component_blocks_are_separate(self):
        transport_map = random_map(2, 3, seed=18)
        theta = rqmc_rule(2, 10, seed=7).points
        first_block = transport_map.blocks()[0]
        changed = transport_map.coefficients.copy()
        changed[transport_map.blocks()[1]] += 0.3
        before = grad_log_pullback(Surrogate(map=transport_map), theta)[:, first_block]
        after = grad_log_pullback(Surrogate(map=transport_map.with_coefficients(changed)), theta)[:, first_block]
        np.testing.assert_array_equal(before, after)

    def test_input_gradient_matches_finite_differences(self):
        inner = Surrogate(map=random_map(2, 3, seed=19))
        surrogate = Surrogate(map=random_map(2, 4, seed=20), reference=inner)
        theta = np.array([0.35, 0.55])
        step = 1e-6
        expected = []
        for i in range(2):
            shift = np.zeros(2)
            shift[i] = step
            expected.append((log_pullback(surrogate, theta + shift) - log_pullback(surrogate, theta - shift)) / (2 * step))
        np.testing.assert_allclose(grad_input_log_density(surrogate, theta), expected, rtol=1e-5, atol=1e-7)


class PullbackQuadratureTests(TestCase):
    def test_identity_surrogate_keeps_rule(self):
        rule = rqmc_rule(2, 20, seed=1)
        moved = pullback_quadrature(Surrogate(map=TriangularMap.identity(2, 3)), rule)
        np.testing.assert_allclose(moved.points, rule.points, atol=1e-9)

    def test_weights_preserved(self):
        rule = QuadratureRule(points=rqmc_rule(2, 5, seed=2).points, weights=[0.1, 0.2, 0.3, 0.15, 0.25], normalized=True)
        moved = pullback_quadrature(Surrogate(map=random_map(2, 3, seed=21)), rule)
        np.testing.assert_array_equal(moved.weights, rule.weights)

    def test_composed_chain_inverts_innermost_first(self):
        inner = Surrogate(map=random_map(2, 3, seed=22))
        outer = Surrogate(map=random_map(2, 3, seed=23), reference=inner)
        rule = rqmc_rule(2, 10, seed=3)
        moved = pullback_quadrature(outer, rule)
        recovered = map_forward(inner.map, map_forward(outer.map, moved.points))
        np.testing.assert_allclose(recovered, rule.points, atol=1e-8)


class SampleTests(TestCase):
    def test_identity_surrogate_samples_uniform(self):
        draws = sample(Surrogate(map=TriangularMap.identity(2, 3)), 4096, seed=0)
        for j in range(2):
            self.assertGreater(stats.kstest(draws[:, j], "uniform").pvalue, 0.01)

    def test_deterministic(self):
        surrogate = Surrogate(map=random_map(2, 3, seed=24))
        np.testing.assert_array_equal(sample(surrogate, 50, seed=9), sample(surrogate, 50, seed=9))


class SerializationTests(TestCase):
    def test_reload_evaluates_identically(self):
        inner = Surrogate(map=random_map(2, 4, seed=25))
        outer = Surrogate(map=random_map(2, 5, seed=26), reference=inner)
        text = dumps_surrogate(outer)
        self.assertTrue(text.startswith("annealmap-surrogate v1\ndimension 2\ndepth 2\n"))
        reloaded = loads_surrogate(text)
        points = rqmc_rule(2, 30, seed=4).points
        np.testing.assert_array_equal(log_pullback(reloaded, points), log_pullback(outer, points))

    def test_file_round_trip(self):
        surrogate = Surrogate(map=random_map(3, 3, seed=27))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "surrogate_final.txt"
            dump_surrogate(surrogate, path)
            reloaded = load_surrogate(path)
        np.testing.assert_array_equal(reloaded.map.coefficients, surrogate.map.coefficients)

    def test_prior_round_trip(self):
        self.assertIsInstance(loads_surrogate(dumps_surrogate(UniformPrior(2))), UniformPrior)

    def test_rejects_bad_header(self):
        with self.assertRaises(ContractViolationError):
            loads_surrogate("not a surrogate\n")
