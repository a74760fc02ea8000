"""
Quadrature rules on the unit hypercube.
"""

from .models import QuadratureRule
from .services import (
    gauss_legendre_rule,
    midpoint_grid_rule,
    normalize,
    read_rule_csv,
    ress,
    rqmc_rule,
    star_discrepancy,
    uniform_random_rule,
    write_rule_csv,
)

__all__ = [
    "QuadratureRule",
    "gauss_legendre_rule",
    "midpoint_grid_rule",
    "normalize",
    "read_rule_csv",
    "ress",
    "rqmc_rule",
    "star_discrepancy",
    "uniform_random_rule",
    "write_rule_csv",
]
