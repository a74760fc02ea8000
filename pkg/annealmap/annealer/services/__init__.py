"""
Annealing services.

Keep `tempering` free of likelihood calls: it only rebuilds rules from
prepared memos.
"""

from .driver import anneal
from .evaluation import EvaluationStore, LikelihoodEvaluator
from .tempering import acceptance_threshold, banded_order, candidate_betas, capped_order, choose_beta, parameter_count

__all__ = [
    "EvaluationStore",
    "LikelihoodEvaluator",
    "acceptance_threshold",
    "anneal",
    "banded_order",
    "candidate_betas",
    "capped_order",
    "choose_beta",
    "parameter_count",
]
