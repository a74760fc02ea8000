from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Callable, Optional

from annealer import AnnealConfig
from annealmap import settings
from annealmap.exceptions import ContractViolationError
from forward_models.services.targets import CATALOG
from objective import FitConfig

from .exceptions import ConfigValidationError
from .models import PROBLEM_KINDS, ExperimentConfig, MetricsSpec, OutputSpec, ProblemSpec, Seeds

# Strict object shapes: (required keys, optional keys). Anything else is an error.
TOP_LEVEL_KEYS = ({"problem", "anneal", "output"}, {"seeds", "metrics", "workers"})
PROBLEM_KEYS_BY_KIND: dict[str, tuple[set[str], set[str]]] = {
    "diffusion-single": ({"kind"}, {"truth", "noise_variance", "resolutions", "data_resolution"}),
    "diffusion-multi": ({"kind"}, {"truth", "noise_variance", "resolutions", "data_resolution", "second_center"}),
    "analytic": ({"kind", "target"}, set()),
}
ANNEAL_KEYS = (
    {"thresholds", "sample_counts"},
    {
        "orders",
        "steps_per_fidelity",
        "n_beta",
        "discount",
        "ress_floor",
        "gamma",
        "regularization",
        "refine_steps",
        "order_policy",
        "integration_nodes",
        "max_parameter_ratio",
        "fit",
    },
)
FIT_KEYS = (set(), {"steps", "step_size", "momentum"})
SEED_KEYS = (set(), {"data", "rqmc", "sampling"})
OUTPUT_KEYS = ({"directory"}, {"density_grid", "samples", "quadrature", "sample_count"})
METRICS_KEYS = (set(), {"enabled", "reference_order", "pullback_points", "bandwidth"})


class _Errors(list):
    """Collects messages instead of stopping at the first one."""

    def guard(self, check: Callable[..., Any], *args: Any, **kwargs: Any) -> Any:
        try:
            return check(*args, **kwargs)
        except ConfigValidationError as exc:
            self.extend(exc.errors)
            return None


def _require_dict(value: Any, *, field_name: str) -> dict[str, Any]:
    if not isinstance(value, dict):
        raise ConfigValidationError(f"{field_name} must be an object")
    return value


def _require_list(value: Any, *, field_name: str) -> list[Any]:
    if not isinstance(value, list):
        raise ConfigValidationError(f"{field_name} must be a list")
    return value


def _require_str(value: Any, *, field_name: str) -> str:
    if not isinstance(value, str):
        raise ConfigValidationError(f"{field_name} must be a string")
    return value


def _require_bool(value: Any, *, field_name: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigValidationError(f"{field_name} must be true or false")
    return value


def _require_int(value: Any, *, field_name: str, minimum: Optional[int] = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigValidationError(f"{field_name} must be an integer")
    if minimum is not None and value < minimum:
        raise ConfigValidationError(f"{field_name} must be >= {minimum}, got {value}")
    return value


def _require_number(value: Any, *, field_name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigValidationError(f"{field_name} must be a number")
    return float(value)


def _require_unit_point(value: Any, *, field_name: str) -> tuple[float, float]:
    items = _require_list(value, field_name=field_name)
    if len(items) != 2:
        raise ConfigValidationError(f"{field_name} must have 2 coordinates, got {len(items)}")
    point = tuple(_require_number(x, field_name=f"{field_name}[{i}]") for i, x in enumerate(items))
    if not all(0.0 <= x <= 1.0 for x in point):
        raise ConfigValidationError(f"{field_name} must lie in [0,1]^2, got {list(point)}")
    return point


def _validate_shape(obj: dict[str, Any], keys: tuple[set[str], set[str]], *, field_name: str) -> bool:
    required, optional = keys
    actual = set(obj.keys())
    missing = required - actual
    extra = actual - required - optional
    if missing or extra:
        raise ConfigValidationError(
            f"{field_name} must have keys {sorted(required)} and may have {sorted(optional)}. "
            f"Missing={sorted(missing)} Extra={sorted(extra)}"
        )
    return True


def _section(raw: dict[str, Any], name: str, keys: tuple[set[str], set[str]], errors: _Errors) -> dict[str, Any]:
    if name not in raw:
        return {}
    section = errors.guard(_require_dict, raw[name], field_name=name)
    if section is None or not errors.guard(_validate_shape, section, keys, field_name=name):
        return {}
    return section


def _schedule(value: Any, *, field_name: str, integer: bool) -> Any:
    """A scalar or a non-empty list of scalars."""
    check = _require_int if integer else _require_number
    if isinstance(value, list):
        if not value:
            raise ConfigValidationError(f"{field_name} must not be empty")
        errors = _Errors()
        items = [errors.guard(check, x, field_name=f"{field_name}[{i}]") for i, x in enumerate(value)]
        if errors:
            raise ConfigValidationError(errors)
        return tuple(items)
    return check(value, field_name=field_name)


def _validate_problem(raw: dict[str, Any], level_count: Optional[int], errors: _Errors) -> Optional[ProblemSpec]:
    section = errors.guard(_require_dict, raw.get("problem"), field_name="problem")
    if section is None:
        return None
    kind = errors.guard(_require_str, section.get("kind"), field_name="problem.kind")
    if kind is None:
        return None
    if kind not in PROBLEM_KINDS:
        errors.append(f"problem.kind must be one of {list(PROBLEM_KINDS)}, got {kind!r}")
        return None
    if not errors.guard(_validate_shape, section, PROBLEM_KEYS_BY_KIND[kind], field_name="problem"):
        return None

    if kind == "analytic":
        target = errors.guard(_require_str, section["target"], field_name="problem.target")
        if target is not None and target not in CATALOG:
            errors.append(f"problem.target must be one of {sorted(CATALOG)}, got {target!r}")
        return ProblemSpec(kind=kind, target=target)

    multi = kind == "diffusion-multi"
    default_truth = settings.MULTI_SOURCE_CENTERS[0] if multi else settings.DEFAULT_SINGLE_SOURCE_TRUTH
    default_resolutions = settings.MULTI_SOURCE_RESOLUTIONS if multi else settings.SINGLE_SOURCE_RESOLUTIONS

    truth = default_truth
    if "truth" in section:
        truth = errors.guard(_require_unit_point, section["truth"], field_name="problem.truth") or default_truth

    noise_variance = settings.DEFAULT_NOISE_VARIANCE
    if "noise_variance" in section:
        value = errors.guard(_require_number, section["noise_variance"], field_name="problem.noise_variance")
        if value is not None and value <= 0.0:
            errors.append(f"problem.noise_variance must be > 0, got {value}")
        noise_variance = value if value is not None else noise_variance

    resolutions = tuple(default_resolutions)
    if "resolutions" in section:
        items = errors.guard(_require_list, section["resolutions"], field_name="problem.resolutions")
        if items is not None:
            parsed = [
                errors.guard(_require_int, r, field_name=f"problem.resolutions[{i}]", minimum=8)
                for i, r in enumerate(items)
            ]
            if None not in parsed:
                if any(b <= a for a, b in zip(parsed, parsed[1:])):
                    errors.append(f"problem.resolutions must increase strictly, got {parsed}")
                resolutions = tuple(parsed)
    if level_count is not None and len(resolutions) != level_count:
        errors.append(
            f"problem.resolutions has {len(resolutions)} levels but anneal.thresholds has {level_count}"
        )

    data_resolution = settings.DATA_RESOLUTION
    if "data_resolution" in section:
        data_resolution = (
            errors.guard(_require_int, section["data_resolution"], field_name="problem.data_resolution", minimum=8)
            or data_resolution
        )

    second_center = settings.MULTI_SOURCE_CENTERS[1] if multi else None
    if "second_center" in section:
        second_center = (
            errors.guard(_require_unit_point, section["second_center"], field_name="problem.second_center")
            or second_center
        )

    return ProblemSpec(
        kind=kind,
        truth=tuple(truth),
        noise_variance=noise_variance,
        resolutions=resolutions,
        data_resolution=data_resolution,
        second_center=second_center,
    )


def _validate_fit(section: dict[str, Any], errors: _Errors) -> FitConfig:
    options: dict[str, Any] = {}
    if "steps" in section:
        options["steps"] = errors.guard(_require_int, section["steps"], field_name="anneal.fit.steps", minimum=1)
    for key in ("step_size", "momentum"):
        if key in section:
            options[key] = errors.guard(_require_number, section[key], field_name=f"anneal.fit.{key}")
    options = {k: v for k, v in options.items() if v is not None}
    try:
        return FitConfig(**options)
    except ContractViolationError as exc:
        errors.append(f"anneal.fit: {exc}")
        return FitConfig()


def _validate_anneal(
    raw: dict[str, Any], seeds: Seeds, workers: int, errors: _Errors
) -> tuple[Optional[AnnealConfig], Optional[int]]:
    section = errors.guard(_require_dict, raw.get("anneal"), field_name="anneal")
    if section is None:
        return None, None
    if not errors.guard(_validate_shape, section, ANNEAL_KEYS, field_name="anneal"):
        return None, None

    options: dict[str, Any] = {"rqmc_seed": seeds.rqmc, "workers": workers}
    level_count = None
    thresholds = errors.guard(_require_list, section["thresholds"], field_name="anneal.thresholds")
    if thresholds is not None:
        parsed = [errors.guard(_require_number, t, field_name=f"anneal.thresholds[{i}]") for i, t in enumerate(thresholds)]
        if None not in parsed:
            options["thresholds"] = tuple(parsed)
            level_count = len(parsed)

    options["sample_counts"] = errors.guard(
        _schedule, section["sample_counts"], field_name="anneal.sample_counts", integer=True
    )
    if "orders" in section:
        options["orders"] = errors.guard(_schedule, section["orders"], field_name="anneal.orders", integer=True)
    if "regularization" in section:
        options["regularization"] = errors.guard(
            _schedule, section["regularization"], field_name="anneal.regularization", integer=False
        )
    if "steps_per_fidelity" in section:
        items = errors.guard(_require_list, section["steps_per_fidelity"], field_name="anneal.steps_per_fidelity")
        if items is not None:
            parsed = [
                errors.guard(_require_int, s, field_name=f"anneal.steps_per_fidelity[{i}]", minimum=1)
                for i, s in enumerate(items)
            ]
            options["steps_per_fidelity"] = None if None in parsed else tuple(parsed)
    for key in ("n_beta", "refine_steps", "integration_nodes"):
        if key in section:
            options[key] = errors.guard(_require_int, section[key], field_name=f"anneal.{key}")
    for key in ("discount", "ress_floor", "gamma", "max_parameter_ratio"):
        if key in section:
            options[key] = errors.guard(_require_number, section[key], field_name=f"anneal.{key}")
    if "order_policy" in section:
        options["order_policy"] = errors.guard(_require_str, section["order_policy"], field_name="anneal.order_policy")
    if "fit" in section:
        fit_section = errors.guard(_require_dict, section["fit"], field_name="anneal.fit")
        if fit_section is not None and errors.guard(_validate_shape, fit_section, FIT_KEYS, field_name="anneal.fit"):
            options["fit"] = _validate_fit(fit_section, errors)

    if any(value is None for value in options.values()):
        return None, level_count
    try:
        return AnnealConfig(**options), level_count
    except ContractViolationError as exc:
        errors.extend(f"anneal: {message}" for message in str(exc).split("; "))
        return None, level_count


def _validate_seeds(raw: dict[str, Any], errors: _Errors) -> Seeds:
    section = _section(raw, "seeds", SEED_KEYS, errors)
    values = {}
    for key in SEED_KEYS[1]:
        if key in section:
            value = errors.guard(_require_int, section[key], field_name=f"seeds.{key}", minimum=0)
            if value is not None:
                values[key] = value
    return Seeds(**values)


def _validate_output(raw: dict[str, Any], errors: _Errors) -> Optional[OutputSpec]:
    section = _section(raw, "output", OUTPUT_KEYS, errors)
    if "directory" not in section:
        return None
    directory = errors.guard(_require_str, section["directory"], field_name="output.directory")
    options: dict[str, Any] = {}
    for key in ("density_grid", "samples", "quadrature"):
        if key in section:
            value = errors.guard(_require_bool, section[key], field_name=f"output.{key}")
            if value is not None:
                options[key] = value
    if "sample_count" in section:
        value = errors.guard(_require_int, section["sample_count"], field_name="output.sample_count", minimum=1)
        if value is not None:
            options["sample_count"] = value
    if directory is None:
        return None
    return OutputSpec(directory=Path(directory), **options)


def _validate_metrics(raw: dict[str, Any], errors: _Errors) -> MetricsSpec:
    section = _section(raw, "metrics", METRICS_KEYS, errors)
    options: dict[str, Any] = {}
    if "enabled" in section:
        options["enabled"] = errors.guard(_require_bool, section["enabled"], field_name="metrics.enabled")
    for key in ("reference_order", "pullback_points"):
        if key in section:
            options[key] = errors.guard(_require_int, section[key], field_name=f"metrics.{key}", minimum=1)
    if "bandwidth" in section:
        value = errors.guard(_require_number, section["bandwidth"], field_name="metrics.bandwidth")
        if value is not None and value <= 0.0:
            errors.append(f"metrics.bandwidth must be > 0, got {value}")
            value = None
        options["bandwidth"] = value
    return MetricsSpec(**{k: v for k, v in options.items() if v is not None})


def validate_experiment_config(raw: Any) -> ExperimentConfig:
    """
    Validate an experiment config strictly and build it.

    Rules:
    - top level has problem, anneal, output and optionally seeds, metrics, workers
    - every nested object carries only its allowed keys
    - schedules are a scalar or a list; with steps_per_fidelity their lengths are 1 or the step total
    - diffusion resolutions have one entry per threshold

    Raises:
        ConfigValidationError: listing every problem found
    """
    errors = _Errors()
    config = errors.guard(_require_dict, raw, field_name="config")
    if config is None:
        raise ConfigValidationError(errors)
    errors.guard(_validate_shape, config, TOP_LEVEL_KEYS, field_name="config")

    workers = 1
    if "workers" in config:
        workers = errors.guard(_require_int, config["workers"], field_name="workers", minimum=1) or 1

    seeds = _validate_seeds(config, errors)
    anneal, level_count = (None, None)
    if "anneal" in config:
        anneal, level_count = _validate_anneal(config, seeds, workers, errors)
    problem = _validate_problem(config, level_count, errors) if "problem" in config else None
    output = _validate_output(config, errors)
    metrics = _validate_metrics(config, errors)

    if errors:
        raise ConfigValidationError(errors)
    return ExperimentConfig(
        problem=problem,
        anneal=anneal,
        output=output,
        seeds=seeds,
        metrics=metrics,
        workers=workers,
        raw=config,
    )


def load_experiment_config(path: Path) -> ExperimentConfig:
    """Read and validate a JSON config; relative output directories resolve against the working directory."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigValidationError(f"{path}: not valid JSON ({exc})") from exc
    return validate_experiment_config(raw)
