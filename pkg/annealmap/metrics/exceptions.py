"""
Custom exceptions for the metrics app.
"""

from annealmap.exceptions import AnnealmapError


class DegenerateCovarianceError(AnnealmapError):
    """Raised when a rule has a single effective point (sum of squared weights is 1)."""
    pass
