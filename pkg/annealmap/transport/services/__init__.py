"""
Triangular transport maps and surrogate densities.

Keep these functions pure (no files except the explicit dump/load helpers)
so they are easy to unit test.
"""

from .basis import basis_eval, shifted_legendre
from .component import ComponentEvaluation, component_forward
from .serialization import (
    SurrogateFormatError,
    dump_surrogate,
    dumps_surrogate,
    load_surrogate,
    loads_surrogate,
)
from .surrogate import (
    density_grid,
    grad_input_log_density,
    grad_log_pullback,
    log_density_and_coefficient_gradient,
    log_pullback,
    pull_back_points,
    pullback_quadrature,
    sample,
)
from .triangular import map_forward, map_inverse, map_jacobian, map_log_determinant

__all__ = [
    "ComponentEvaluation",
    "SurrogateFormatError",
    "basis_eval",
    "component_forward",
    "density_grid",
    "dump_surrogate",
    "dumps_surrogate",
    "grad_input_log_density",
    "grad_log_pullback",
    "load_surrogate",
    "loads_surrogate",
    "log_density_and_coefficient_gradient",
    "log_pullback",
    "map_forward",
    "map_inverse",
    "map_jacobian",
    "map_log_determinant",
    "pull_back_points",
    "pullback_quadrature",
    "sample",
    "shifted_legendre",
]
