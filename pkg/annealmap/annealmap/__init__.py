"""
annealmap: transport-map surrogates of Bayesian posteriors built by
generalized annealing over temperature and model fidelity.
"""

__version__ = "0.1.0"
