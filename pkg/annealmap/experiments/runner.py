"""
Runs, resumes and post-processes experiments described by a JSON config.

A run directory holds:

    config.json            the config as given (its hash identifies the run)
    data.json              the synthetic observations, if any
    diagnostics.csv        one row per annealing step; new_evals counts the
                           abscissae of the step, cached or not
    quadrature_{j}.csv     the importance rule of step j
    surrogate_final.txt    the final surrogate chain
    density_grid.csv       surrogate density on the plotting grid (optional)
    samples.csv            draws from the final surrogate (optional)
    cache/evaluations.csv  every likelihood value ever computed
    archive/               per-step state and the manifest
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np

from annealer import AnnealState, StepDiagnostics
from annealer.services import LikelihoodEvaluator, anneal
from annealmap import settings
from forward_models import CountingLikelihood
from forward_models.services import (
    analytic_targets,
    build_hierarchy,
    generate_data,
    multi_source_problem,
    single_source_problem,
)
from metrics import ErrorMetrics, reference_posterior_rule, relative_errors
from quadrature import QuadratureRule, rqmc_rule, write_rule_csv
from transport import Density
from transport.services import density_grid, dump_surrogate, load_surrogate, pullback_quadrature, sample

from .archive import RunArchive, write_json_atomic
from .cache import EvaluationCache
from .exceptions import ArchiveCorruptedError, ConfigMismatchError, RunFailedError
from .models import ExperimentConfig, RunStatus, RunSummary, config_sha256
from .report import write_report
from .validation import load_experiment_config, validate_experiment_config

logger = logging.getLogger(__name__)

CONFIG_NAME = "config.json"
DATA_NAME = "data.json"
DIAGNOSTICS_NAME = "diagnostics.csv"
SURROGATE_NAME = "surrogate_final.txt"
DENSITY_GRID_NAME = "density_grid.csv"
SAMPLES_NAME = "samples.csv"
REPORT_NAME = "report.xlsx"
CACHE_NAME = "cache/evaluations.csv"

DIAGNOSTIC_COLUMNS = [
    "j",
    "fidelity",
    "beta",
    "p",
    "ress",
    "rmse",
    "forstner",
    "mmd_matern15",
    "mmd_gaussian",
    "new_evals",
    "cumulative_evals",
]

StepCallback = Callable[[AnnealState, StepDiagnostics], None]


def build_likelihood(
    config: ExperimentConfig, data: Optional[dict[str, Any]] = None
) -> tuple[CountingLikelihood, dict[str, Any]]:
    """
    Likelihood hierarchy of the configured problem and its data document.

    Observations are generated from the data seed unless `data` (an earlier
    data.json) is given. Multi-source data carries no noise.
    """
    problem = config.problem
    if problem.kind == "analytic":
        target = analytic_targets(config.anneal.level_count)[problem.target]
        return target, {"kind": problem.kind, "target": problem.target}

    if problem.kind == "diffusion-multi":
        diffusion = multi_source_problem(problem.resolutions, problem.data_resolution, problem.second_center)
        data_noise = 0.0
    else:
        diffusion = single_source_problem(problem.resolutions, problem.data_resolution)
        data_noise = problem.noise_variance

    if data is None:
        observations = generate_data(diffusion, problem.truth, data_noise, seed=config.seeds.data)
        data = {
            "kind": problem.kind,
            "truth": list(problem.truth),
            "noise_variance": data_noise,
            "seed": config.seeds.data,
            "observations": observations.tolist(),
        }
    else:
        observations = np.array(data["observations"], dtype=float)
    return build_hierarchy(diffusion, observations, problem.noise_variance), data


class StepScorer:
    """Error metrics of each step against a reference posterior, relative to the prior."""

    def __init__(self, config: ExperimentConfig, likelihood: CountingLikelihood) -> None:
        spec = config.metrics
        self.bandwidth = spec.bandwidth
        self.base = rqmc_rule(likelihood.dimension, spec.pullback_points, seed=config.seeds.sampling)
        self.reference = reference_posterior_rule(likelihood, spec.reference_order)

    def __call__(self, surrogate: Density, rule: QuadratureRule) -> ErrorMetrics:
        return relative_errors(
            quadrature_rule=rule,
            surrogate_rule=pullback_quadrature(surrogate, self.base),
            reference_rule=self.reference,
            prior_rule=self.base,
            bandwidth=self.bandwidth,
        )


def _metric_cells(row: StepDiagnostics) -> list[str]:
    if row.metrics is None:
        return ["", "", "", ""]
    return [repr(float(value)) for value in row.metrics.as_row().values()]


def write_diagnostics_csv(rows: Sequence[StepDiagnostics], path: Path) -> None:
    """Wall time is left out so that identical runs give identical files."""
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(DIAGNOSTIC_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row.step,
                    row.fidelity,
                    repr(float(row.beta)),
                    row.parameter_count,
                    repr(float(row.ress)),
                    *_metric_cells(row),
                    row.new_evaluations,
                    row.cumulative_evaluations[row.fidelity],
                ]
            )


def read_diagnostics_csv(path: Path) -> list[dict[str, str]]:
    with Path(path).open(newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def write_density_grid(surrogate: Density, path: Path, m: int = settings.DENSITY_GRID_SIZE) -> None:
    points, values = density_grid(surrogate, m)
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow([*(f"theta_{i + 1}" for i in range(points.shape[1])), "density"])
        for point, value in zip(points, values):
            writer.writerow([*(repr(float(x)) for x in point), repr(float(value))])


def write_samples(surrogate: Density, path: Path, n: int, seed: int) -> None:
    draws = sample(surrogate, n, seed)
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow([f"theta_{i + 1}" for i in range(draws.shape[1])])
        writer.writerows([repr(float(x)) for x in draw] for draw in draws)


def _read_json(path: Path) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ArchiveCorruptedError([f"{path}: {exc}"]) from exc


def _execute(
    config: ExperimentConfig,
    archive: RunArchive,
    likelihood: CountingLikelihood,
    state: Optional[AnnealState],
    on_step: Optional[StepCallback],
) -> RunSummary:
    run_dir = archive.run_dir
    manifest = archive.manifest
    manifest.mark_running()
    archive.save_manifest()
    scorer: Optional[StepScorer] = None

    def persist(current: AnnealState, row: StepDiagnostics) -> None:
        if scorer is not None:
            row = row.with_metrics(scorer(current.surrogate, current.rule))
            current.diagnostics[-1] = row
        archive.save_step(current)
        if config.output.quadrature:
            write_rule_csv(current.rule, run_dir / f"quadrature_{row.step}.csv")
        write_diagnostics_csv(current.diagnostics, run_dir / DIAGNOSTICS_NAME)
        if on_step is not None:
            on_step(current, row)

    try:
        scorer = StepScorer(config, likelihood) if config.metrics.enabled else None
        cache = EvaluationCache(run_dir / CACHE_NAME, likelihood.dimension)
        evaluator = LikelihoodEvaluator(likelihood, workers=config.workers, store=cache)
        result = anneal(likelihood, config.anneal, state=state, evaluator=evaluator, on_step=persist)

        dump_surrogate(result.surrogate, run_dir / SURROGATE_NAME)
        archive.record(SURROGATE_NAME)
        if config.output.density_grid:
            write_density_grid(result.surrogate, run_dir / DENSITY_GRID_NAME)
        if config.output.samples:
            write_samples(result.surrogate, run_dir / SAMPLES_NAME, config.output.sample_count, config.seeds.sampling)
    except Exception as exc:
        logger.error(f"run in {run_dir} failed: {exc}", exc_info=True)
        manifest.mark_failed(str(exc))
        archive.save_manifest()
        raise RunFailedError(f"run in {run_dir} failed: {exc}") from exc

    manifest.mark_succeeded()
    archive.save_manifest()
    logger.info(f"run in {run_dir} finished after {len(result.diagnostics)} steps; model calls {likelihood.counts()}")
    return RunSummary(
        output_dir=run_dir,
        steps=len(result.diagnostics),
        model_calls=likelihood.counts(),
        status=manifest.status,
        resumed=state is not None,
    )


def run_experiment(config: ExperimentConfig, *, on_step: Optional[StepCallback] = None) -> RunSummary:
    """
    Run an experiment from step 1 into its output directory.

    A directory that already holds a run of the same config is rerun; its
    evaluation cache is reused, so no likelihood value is computed twice.

    Raises:
        ConfigMismatchError: the directory belongs to a different config
        RunFailedError: the run stopped; completed steps stay archived
    """
    run_dir = Path(config.output.directory)
    run_dir.mkdir(parents=True, exist_ok=True)
    config_path = run_dir / CONFIG_NAME
    if config_path.exists():
        previous = config_sha256(_read_json(config_path))
        if previous != config.config_hash:
            raise ConfigMismatchError(f"{run_dir} holds a run of a different config ({previous[:12]})")

    logger.info(f"starting run in {run_dir} (config {config.config_hash[:12]})")
    write_json_atomic(config_path, config.raw)
    archive = RunArchive(run_dir)
    archive.create(config.config_hash)
    for stale in run_dir.glob("quadrature_*.csv"):
        stale.unlink()

    likelihood, data = build_likelihood(config)
    write_json_atomic(run_dir / DATA_NAME, data)
    archive.record(CONFIG_NAME)
    archive.record(DATA_NAME)
    return _execute(config, archive, likelihood, None, on_step)


def _config_for(run_dir: Path, manifest_hash: str, config_path: Optional[Path]) -> ExperimentConfig:
    if config_path is not None:
        config = load_experiment_config(config_path)
    else:
        config = validate_experiment_config(_read_json(run_dir / CONFIG_NAME))
    if config.config_hash != manifest_hash:
        raise ConfigMismatchError(
            f"config hash {config.config_hash[:12]} does not match the run's {manifest_hash[:12]}"
        )
    return config.with_output_directory(run_dir)


def resume_run(
    run_dir: Path, config_path: Optional[Path] = None, *, on_step: Optional[StepCallback] = None
) -> RunSummary:
    """
    Continue a run after its last archived step.

    A completed run is left untouched. Archived likelihood values are reused,
    so the resumed run ends exactly where an uninterrupted one would.

    Raises:
        ConfigMismatchError: `config_path` (or the stored config) differs from the run's
        ArchiveCorruptedError: an archived file does not match its checksum
        RunFailedError: the run stopped again
    """
    run_dir = Path(run_dir)
    archive = RunArchive(run_dir)
    manifest = archive.open()
    config = _config_for(run_dir, manifest.config_sha256, config_path)
    archive.verify()

    if manifest.status is RunStatus.SUCCEEDED:
        logger.info(f"run in {run_dir} already completed; nothing to resume")
        return RunSummary(
            output_dir=run_dir,
            steps=len(archive.archived_steps()),
            model_calls={},
            status=manifest.status,
            resumed=True,
        )

    state = archive.load_state()
    data = _read_json(run_dir / DATA_NAME) if config.problem.kind != "analytic" else None
    likelihood, _ = build_likelihood(config, data)
    logger.info(f"resuming run in {run_dir} after step {state.step if state else 0}")
    return _execute(config, archive, likelihood, state, on_step)


def validate(path: Path) -> ExperimentConfig:
    """Validate a config file; raises ConfigValidationError with every problem found."""
    config = load_experiment_config(path)
    logger.info(f"{path}: valid ({config.problem.kind}, {config.anneal.level_count} fidelities)")
    return config


def emit_plots(run_dir: Path) -> list[Path]:
    """
    Plot data and a spreadsheet report for a finished run.

    Writes density_grid.csv and samples.csv from the final surrogate when
    the output section asks for them, and always report.xlsx with the
    diagnostics and the final quadrature rule.
    """
    run_dir = Path(run_dir)
    archive = RunArchive(run_dir)
    manifest = archive.open()
    if manifest.status is not RunStatus.SUCCEEDED:
        raise RunFailedError(f"run in {run_dir} has not completed (status {manifest.status.value})")
    archive.verify()
    config = _config_for(run_dir, manifest.config_sha256, None)

    surrogate = load_surrogate(run_dir / SURROGATE_NAME)
    state = archive.load_state()
    written = []
    if config.output.density_grid:
        written.append(run_dir / DENSITY_GRID_NAME)
        write_density_grid(surrogate, written[-1])
    if config.output.samples:
        written.append(run_dir / SAMPLES_NAME)
        write_samples(surrogate, written[-1], config.output.sample_count, config.seeds.sampling)
    written.append(run_dir / REPORT_NAME)
    write_report(read_diagnostics_csv(run_dir / DIAGNOSTICS_NAME), state.rule, written[-1])
    logger.info(f"wrote {', '.join(path.name for path in written)} to {run_dir}")
    return written
