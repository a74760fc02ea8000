"""
Monotone triangular transport maps on [0,1]^d and the surrogates built from them.
"""

from .models import Density, MapComponent, MultiIndexSet, Surrogate, TriangularMap, UniformPrior

__all__ = [
    "Density",
    "MapComponent",
    "MultiIndexSet",
    "Surrogate",
    "TriangularMap",
    "UniformPrior",
]
