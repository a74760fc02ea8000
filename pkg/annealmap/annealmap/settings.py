"""
Settings for the annealmap project.

Library-wide defaults. Experiment configs override most of these per run;
nothing here is read from the environment.
"""

from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

EXAMPLE_CONFIG_DIR = BASE_DIR / "experiments" / "configs"


# Quadrature

MAX_RQMC_DIMENSION = 20
SCRAMBLE_BITS = 32
NORMALIZATION_TOL = 1e-12


# Transport maps

# Gauss-Legendre node count per component is 2 * order + INTEGRATION_NODE_OFFSET.
INTEGRATION_NODE_OFFSET = 4
DEFAULT_INVERSE_TOL = 1e-10
DEFAULT_INVERSE_MAXITER = 100
# Points per block when evaluating maps on large grids.
EVALUATION_CHUNK = 4096
SURROGATE_FORMAT_VERSION = 1


# Cross-entropy fit

DEFAULT_FIT_STEPS = 1000
DEFAULT_STEP_SIZE = 1e-3
DEFAULT_MOMENTUM = 0.9
DEFAULT_REGULARIZATION = 1e-3


# Tempering / annealing

DEFAULT_N_BETA = 40
DEFAULT_DISCOUNT = 0.8
DEFAULT_RESS_FLOOR = 0.5
DEFAULT_GAMMA = 2.0
DEFAULT_REFINE_STEPS = 1
# Order policy bands (rESS below the first lowers the order, above the second raises it).
ORDER_POLICY_BANDS = (0.3, 0.8)


# Forward models

DIFFUSION_WIDTH = 0.15
DEFAULT_NOISE_VARIANCE = 0.04
DEFAULT_SINGLE_SOURCE_TRUTH = (0.25, 0.75)
MULTI_SOURCE_CENTERS = ((0.15, 0.15), (0.85, 0.85))
SINGLE_SOURCE_RESOLUTIONS = (16, 64, 128)
MULTI_SOURCE_RESOLUTIONS = (16, 32, 128)
DATA_RESOLUTION = 256
POISSON_RESIDUAL_TOL = 1e-10
LIKELIHOOD_KEY_DIGITS = 15


# Metrics

DEFAULT_MMD_BANDWIDTH = 0.05
DEFAULT_REFERENCE_ORDER = 50
DEFAULT_PULLBACK_POINTS = 4096
# Prior distances below this are reported as absolute errors (a prior mean on
# top of a symmetric posterior mean, for instance).
RELATIVE_ERROR_FLOOR = 1e-3


# Artifacts

DENSITY_GRID_SIZE = 200
DEFAULT_SAMPLE_COUNT = 4096

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_ERROR = 3


LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "default": {
            "format": "%(asctime)s %(levelname)s %(name)s: %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "default",
        },
    },
    "loggers": {
        "": {
            "handlers": ["console"],
            "level": "INFO",
        },
    },
}
