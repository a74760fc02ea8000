from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from math import comb
from typing import Union

import numpy as np

from annealmap import settings
from annealmap.exceptions import ContractViolationError


@dataclass(frozen=True)
class MultiIndexSet:
    """
    Total-order multi-indices of dimension d' whose last entry is at least 1.

    Each index selects the tensor product of shifted Legendre polynomials in
    the first d'-1 inputs with the derivative of one in the last input.
    """

    dimension: int
    order: int

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ContractViolationError(f"index set dimension must be >= 1, got {self.dimension}")
        if self.order < 1:
            raise ContractViolationError(f"total order must be >= 1, got {self.order}")

    @cached_property
    def indices(self) -> np.ndarray:
        rows = [
            alpha
            for alpha in itertools.product(range(self.order + 1), repeat=self.dimension)
            if sum(alpha) <= self.order and alpha[-1] >= 1
        ]
        rows.sort(key=lambda alpha: (sum(alpha), alpha))
        table = np.array(rows, dtype=int).reshape(len(rows), self.dimension)
        table.setflags(write=False)
        return table

    @property
    def cardinality(self) -> int:
        return comb(self.order + self.dimension, self.dimension) - comb(
            self.order + self.dimension - 1, self.dimension - 1
        )

    def __len__(self) -> int:
        return self.cardinality


@dataclass(frozen=True, eq=False)
class MapComponent:
    """
    One rectified-integral component S(x, t) = I(t) / I(1) of a triangular map.

    I(s) integrates softplus of the basis expansion over [0, s] in the last
    input with a fixed Gauss-Legendre rule of `integration_nodes` nodes.
    """

    index_set: MultiIndexSet
    coefficients: np.ndarray
    integration_nodes: int

    def __post_init__(self) -> None:
        coefficients = np.array(self.coefficients, dtype=float).reshape(-1)
        if coefficients.shape[0] != self.index_set.cardinality:
            raise ContractViolationError(
                f"component of dimension {self.index_set.dimension} and order {self.index_set.order} "
                f"needs {self.index_set.cardinality} coefficients, got {coefficients.shape[0]}"
            )
        if not np.all(np.isfinite(coefficients)):
            raise ContractViolationError("map coefficients must be finite")
        if self.integration_nodes < 1:
            raise ContractViolationError("integration_nodes must be >= 1")
        coefficients.setflags(write=False)
        object.__setattr__(self, "coefficients", coefficients)

    @classmethod
    def zeros(cls, dimension: int, order: int, integration_nodes: int | None = None) -> MapComponent:
        index_set = MultiIndexSet(dimension=dimension, order=order)
        nodes = integration_nodes or 2 * order + settings.INTEGRATION_NODE_OFFSET
        return cls(index_set=index_set, coefficients=np.zeros(index_set.cardinality), integration_nodes=nodes)

    @property
    def dimension(self) -> int:
        return self.index_set.dimension

    @property
    def order(self) -> int:
        return self.index_set.order

    @cached_property
    def gauss_rule(self) -> tuple[np.ndarray, np.ndarray]:
        nodes, weights = np.polynomial.legendre.leggauss(self.integration_nodes)
        return 0.5 * (nodes + 1.0), 0.5 * weights

    def with_coefficients(self, coefficients: np.ndarray) -> MapComponent:
        return MapComponent(
            index_set=self.index_set,
            coefficients=coefficients,
            integration_nodes=self.integration_nodes,
        )


@dataclass(frozen=True, eq=False)
class TriangularMap:
    """Lower-triangular monotone map on [0,1]^d; component k reads the first k inputs."""

    components: tuple[MapComponent, ...]

    def __post_init__(self) -> None:
        components = tuple(self.components)
        if not components:
            raise ContractViolationError("a triangular map needs at least one component")
        for k, component in enumerate(components):
            if component.dimension != k + 1:
                raise ContractViolationError(
                    f"component {k + 1} must take {k + 1} inputs, takes {component.dimension}"
                )
        object.__setattr__(self, "components", components)

    @classmethod
    def identity(cls, dimension: int, order: int, integration_nodes: int | None = None) -> TriangularMap:
        return cls(
            components=tuple(
                MapComponent.zeros(k + 1, order, integration_nodes) for k in range(dimension)
            )
        )

    @property
    def dimension(self) -> int:
        return len(self.components)

    @property
    def parameter_count(self) -> int:
        return sum(component.index_set.cardinality for component in self.components)

    @property
    def orders(self) -> tuple[int, ...]:
        return tuple(component.order for component in self.components)

    @property
    def coefficients(self) -> np.ndarray:
        return np.concatenate([component.coefficients for component in self.components])

    def blocks(self) -> list[slice]:
        """Slices of the flat coefficient vector owned by each component."""
        out = []
        start = 0
        for component in self.components:
            stop = start + component.index_set.cardinality
            out.append(slice(start, stop))
            start = stop
        return out

    def with_coefficients(self, coefficients: np.ndarray) -> TriangularMap:
        coefficients = np.asarray(coefficients, dtype=float).reshape(-1)
        if coefficients.shape[0] != self.parameter_count:
            raise ContractViolationError(
                f"map has {self.parameter_count} parameters, got {coefficients.shape[0]}"
            )
        return TriangularMap(
            components=tuple(
                component.with_coefficients(coefficients[block])
                for component, block in zip(self.components, self.blocks())
            )
        )


@dataclass(frozen=True)
class UniformPrior:
    """Uniform density on [0,1]^d, the base of every surrogate chain."""

    dimension: int

    @property
    def depth(self) -> int:
        return 0


@dataclass(frozen=True, eq=False)
class Surrogate:
    """Pullback S^# eta of a reference density eta by a triangular map S."""

    map: TriangularMap
    reference: Union[UniformPrior, "Surrogate"] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.reference is None:
            object.__setattr__(self, "reference", UniformPrior(self.map.dimension))
        if self.reference.dimension != self.map.dimension:
            raise ContractViolationError(
                f"map dimension {self.map.dimension} does not match reference dimension "
                f"{self.reference.dimension}"
            )

    @property
    def dimension(self) -> int:
        return self.map.dimension

    @property
    def depth(self) -> int:
        return 1 + self.reference.depth

    @property
    def parameter_count(self) -> int:
        return self.map.parameter_count

    def chain(self) -> list[TriangularMap]:
        """Maps from innermost (next to the uniform base) to outermost."""
        maps: list[TriangularMap] = []
        density: Density = self
        while isinstance(density, Surrogate):
            maps.append(density.map)
            density = density.reference
        return maps[::-1]


Density = Union[UniformPrior, Surrogate]
