"""
Multiple tempered importance-weighted quadrature over cached stage memos.
"""

from .models import PreparedMIS, StageMemo
from .services import assemble_rule, mis_quadrature, power_heuristic, prepare_mis, snis_reweight

__all__ = [
    "PreparedMIS",
    "StageMemo",
    "assemble_rule",
    "mis_quadrature",
    "power_heuristic",
    "prepare_mis",
    "snis_reweight",
]
