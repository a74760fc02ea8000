"""
Forward models, synthetic data and analytic targets.

Keep these functions pure (no files, no global state beyond factorization caches)
so they are easy to unit test.
"""

from .diffusion import build_hierarchy, generate_data, multi_source_problem, single_source_problem
from .poisson import gaussian_source, grid_nodes, laplacian, observe, solve_poisson
from .targets import GridMoments, analytic_targets, grid_moments

__all__ = [
    "GridMoments",
    "analytic_targets",
    "build_hierarchy",
    "gaussian_source",
    "generate_data",
    "grid_moments",
    "grid_nodes",
    "laplacian",
    "multi_source_problem",
    "observe",
    "single_source_problem",
    "solve_poisson",
]
