"""
Batched evaluation of one map component and its derivatives.

For inputs (x, t) with prefix x and last coordinate t:

    h(x, t)   = sum_alpha c_alpha A_alpha(x) P~'_{alpha_last}(t)
    I(s)      = int_0^s softplus(h(x, t)) dt      (Gauss-Legendre)
    S(x, t)   = I(t) / I(1)
    dS/dt     = softplus(h(x, t)) / I(1)

Coefficient and input derivatives differentiate under the integral and reuse
the same nodes.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np
from scipy.special import expit

from ..models import MapComponent
from .basis import shifted_legendre


def softplus(h: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, h)


class ComponentEvaluation:
    """All quantities of one component at a fixed batch of points (N, d')."""

    def __init__(self, component: MapComponent, points: np.ndarray) -> None:
        self.component = component
        self.points = np.asarray(points, dtype=float)
        self.coefficients = component.coefficients
        self.indices = component.index_set.indices
        self.order = component.order
        self.nodes, self.node_weights = component.gauss_rule
        self.last = self.points[:, -1]

    # prefix factors

    @cached_property
    def _prefix_tables(self) -> list[tuple[np.ndarray, np.ndarray]]:
        tables = []
        for j in range(self.component.dimension - 1):
            values, first, _ = shifted_legendre(self.points[:, j], self.order)
            tables.append((values[:, self.indices[:, j]], first[:, self.indices[:, j]]))
        return tables

    @cached_property
    def prefix_basis(self) -> np.ndarray:
        out = np.ones((self.points.shape[0], self.indices.shape[0]))
        for values, _ in self._prefix_tables:
            out = out * values
        return out

    def prefix_basis_derivative(self, i: int) -> np.ndarray:
        out = np.ones((self.points.shape[0], self.indices.shape[0]))
        for j, (values, first) in enumerate(self._prefix_tables):
            out = out * (first if j == i else values)
        return out

    def _last_factors(self, t: np.ndarray, *, second: bool = False) -> np.ndarray:
        _, d1, d2 = shifted_legendre(t, self.order)
        table = d2 if second else d1
        return table[..., self.indices[:, -1]]

    # integrands

    @cached_property
    def _weighted_prefix(self) -> np.ndarray:
        return self.prefix_basis * self.coefficients

    @cached_property
    def _partial(self) -> tuple[np.ndarray, np.ndarray]:
        # Nodes s * tau for the integral over [0, s].
        factors = self._last_factors(self.last[:, None] * self.nodes[None, :])
        h = np.einsum("nk,nqk->nq", self._weighted_prefix, factors)
        return factors, h

    @cached_property
    def _full(self) -> tuple[np.ndarray, np.ndarray]:
        grid = np.broadcast_to(self.nodes[None, :], (self.points.shape[0], self.nodes.shape[0]))
        factors = self._last_factors(grid)
        h = np.einsum("nk,nqk->nq", self._weighted_prefix, factors)
        return factors, h

    @cached_property
    def _at_point(self) -> tuple[np.ndarray, np.ndarray]:
        factors = self._last_factors(self.last)
        h = np.einsum("nk,nk->n", self._weighted_prefix, factors)
        return factors, h

    @cached_property
    def partial_integral(self) -> np.ndarray:
        _, h = self._partial
        return self.last * (softplus(h) @ self.node_weights)

    @cached_property
    def full_integral(self) -> np.ndarray:
        _, h = self._full
        return softplus(h) @ self.node_weights

    @cached_property
    def value(self) -> np.ndarray:
        return np.clip(self.partial_integral / self.full_integral, 0.0, 1.0)

    @cached_property
    def integrand(self) -> np.ndarray:
        _, h = self._at_point
        return softplus(h)

    @cached_property
    def log_derivative(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.integrand) - np.log(self.full_integral)

    @cached_property
    def _log_integrand_slope(self) -> np.ndarray:
        # d/dh log softplus(h)
        _, h = self._at_point
        with np.errstate(divide="ignore", invalid="ignore"):
            return expit(h) / softplus(h)

    # coefficient derivatives

    @cached_property
    def _full_coefficient_integral(self) -> np.ndarray:
        factors, h = self._full
        return np.einsum("nq,nqk->nk", expit(h) * self.node_weights, factors) * self.prefix_basis

    def value_coefficient_gradient(self) -> np.ndarray:
        """dS/dc, shape (N, K)."""
        factors, h = self._partial
        partial = np.einsum("nq,nqk->nk", expit(h) * self.node_weights, factors)
        partial = partial * self.prefix_basis * self.last[:, None]
        return (partial - self.value[:, None] * self._full_coefficient_integral) / self.full_integral[:, None]

    def log_derivative_coefficient_gradient(self) -> np.ndarray:
        """d/dc log dS/dt, shape (N, K)."""
        factors, _ = self._at_point
        local = self._log_integrand_slope[:, None] * self.prefix_basis * factors
        return local - self._full_coefficient_integral / self.full_integral[:, None]

    # input derivatives

    def _prefix_h_derivative(self, i: int, factors: np.ndarray) -> np.ndarray:
        weighted = self.prefix_basis_derivative(i) * self.coefficients
        if factors.ndim == 2:
            return np.einsum("nk,nk->n", weighted, factors)
        return np.einsum("nk,nqk->nq", weighted, factors)

    def input_gradients(self) -> tuple[np.ndarray, np.ndarray]:
        """
        Derivatives with respect to the component's inputs.

        Returns (dS/dx, d log(dS/dt)/dx), each of shape (N, d').
        """
        n, dim = self.points.shape
        value_grad = np.zeros((n, dim))
        log_grad = np.zeros((n, dim))

        partial_factors, partial_h = self._partial
        full_factors, full_h = self._full
        point_factors, _ = self._at_point

        for i in range(dim - 1):
            d_partial = self.last * ((expit(partial_h) * self._prefix_h_derivative(i, partial_factors)) @ self.node_weights)
            d_full = (expit(full_h) * self._prefix_h_derivative(i, full_factors)) @ self.node_weights
            value_grad[:, i] = (d_partial - self.value * d_full) / self.full_integral
            log_grad[:, i] = (
                self._log_integrand_slope * self._prefix_h_derivative(i, point_factors)
                - d_full / self.full_integral
            )

        value_grad[:, -1] = self.integrand / self.full_integral
        second = self._last_factors(self.last, second=True)
        log_grad[:, -1] = self._log_integrand_slope * np.einsum("nk,nk->n", self._weighted_prefix, second)
        return value_grad, log_grad


def component_forward(component: MapComponent, points: np.ndarray) -> np.ndarray:
    """Normalized partial integral S(x, t) in [0,1] for a batch (N, d') or a single point."""
    points = np.asarray(points, dtype=float)
    single = points.ndim == 1
    out = ComponentEvaluation(component, np.atleast_2d(points)).value
    return out[0] if single else out
