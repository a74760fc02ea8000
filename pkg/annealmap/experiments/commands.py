"""
Command line: run, resume, validate and emit-plots.

Exit codes: 0 success, 2 config error, 3 runtime failure.
"""

from __future__ import annotations

import copy
import functools
import logging
import logging.config
import sys
from pathlib import Path

import click

from annealmap import settings
from annealmap.exceptions import AnnealmapError

from . import runner
from .exceptions import ConfigMismatchError, ConfigValidationError

RUNTIME_ERRORS = (AnnealmapError, OSError)


def _exit_codes(command):
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            command(*args, **kwargs)
        except ConfigValidationError as exc:
            for message in exc.errors:
                click.echo(f"config error: {message}", err=True)
            sys.exit(settings.EXIT_CONFIG_ERROR)
        except ConfigMismatchError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(settings.EXIT_CONFIG_ERROR)
        except RUNTIME_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(settings.EXIT_RUNTIME_ERROR)

    return wrapper


@click.group()
@click.option("--verbose", is_flag=True, help="Log at DEBUG level.")
def cli(verbose: bool) -> None:
    """Gradient-free Bayesian inference with transport-map surrogates."""
    logging_config = copy.deepcopy(settings.LOGGING)
    if verbose:
        logging_config["loggers"][""]["level"] = "DEBUG"
    logging.config.dictConfig(logging_config)


@cli.command()
@click.argument("config", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("-o", "--output", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Run directory; overrides output.directory of the config.")
@_exit_codes
def run(config: Path, output: Path | None) -> None:
    """Run the experiment described by CONFIG."""
    experiment = runner.validate(config)
    if output is not None:
        experiment = experiment.with_output_directory(output)
    summary = runner.run_experiment(experiment)
    click.echo(f"{summary.output_dir}: {summary.steps} steps, model calls {summary.model_calls}")


@cli.command()
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None,
              help="Config to check against the run before resuming.")
@_exit_codes
def resume(run_dir: Path, config_path: Path | None) -> None:
    """Continue the run in RUN_DIR after its last archived step."""
    summary = runner.resume_run(run_dir, config_path)
    click.echo(f"{summary.output_dir}: {summary.status.value}, {summary.steps} steps")


@cli.command()
@click.argument("config", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@_exit_codes
def validate(config: Path) -> None:
    """Check CONFIG and report every problem found."""
    experiment = runner.validate(config)
    click.echo(f"{config}: ok ({experiment.problem.kind}, {experiment.anneal.level_count} fidelities)")


@cli.command("emit-plots")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@_exit_codes
def emit_plots(run_dir: Path) -> None:
    """Write plot data and report.xlsx for the finished run in RUN_DIR."""
    for path in runner.emit_plots(run_dir):
        click.echo(str(path))
