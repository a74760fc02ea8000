"""
Cross-entropy fitting of transport-map coefficients on quadrature rules.
"""

from .exceptions import FitAbortedError
from .models import FitConfig, FitReport
from .services import fit, loss, loss_gradient

__all__ = ["FitAbortedError", "FitConfig", "FitReport", "fit", "loss", "loss_gradient"]
