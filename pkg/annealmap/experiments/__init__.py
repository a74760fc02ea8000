"""
Config-driven experiment runs with persistent evaluation caching and resumable archives.
"""

from .exceptions import ArchiveCorruptedError, ConfigMismatchError, ConfigValidationError, RunFailedError
from .models import ExperimentConfig, RunManifest, RunStatus, RunSummary
from .runner import emit_plots, resume_run, run_experiment, validate
from .validation import load_experiment_config, validate_experiment_config

__all__ = [
    "ArchiveCorruptedError",
    "ConfigMismatchError",
    "ConfigValidationError",
    "ExperimentConfig",
    "RunFailedError",
    "RunManifest",
    "RunStatus",
    "RunSummary",
    "emit_plots",
    "load_experiment_config",
    "resume_run",
    "run_experiment",
    "validate",
    "validate_experiment_config",
]
