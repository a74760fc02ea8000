from __future__ import annotations

import csv
import json
import os
import tempfile
import time
from pathlib import Path
from unittest import TestCase, skipUnless

import numpy as np
from click.testing import CliRunner
from openpyxl import load_workbook

from annealmap import settings
from quadrature import read_rule_csv
from transport.services import load_surrogate

from .cache import EvaluationCache
from .commands import cli
from .exceptions import ArchiveCorruptedError, ConfigMismatchError, ConfigValidationError, RunFailedError
from .models import RunStatus
from .runner import DIAGNOSTIC_COLUMNS, emit_plots, resume_run, run_experiment
from .validation import load_experiment_config, validate_experiment_config

# End-to-end diffusion runs take minutes.
RUN_DIFFUSION_ACCEPTANCE = bool(os.environ.get("ANNEALMAP_ACCEPTANCE"))


def analytic_raw(directory: Path, **anneal_overrides) -> dict:
    anneal = {
        "thresholds": [0.5, 1.0],
        "steps_per_fidelity": [2, 2],
        "sample_counts": 32,
        "orders": 2,
        "fit": {"steps": 60, "step_size": 0.002},
    }
    anneal.update(anneal_overrides)
    return {
        "problem": {"kind": "analytic", "target": "gaussian"},
        "anneal": anneal,
        "seeds": {"rqmc": 1, "sampling": 2},
        "metrics": {"reference_order": 20, "pullback_points": 256},
        "output": {"directory": str(directory), "sample_count": 64},
    }


def read_rows(path: Path) -> list[dict[str, str]]:
    with path.open(newline="") as handle:
        return list(csv.DictReader(handle))


class Interrupt(Exception):
    pass


def interrupt_after(step: int):
    def callback(state, row):
        if row.step == step:
            raise Interrupt(f"stopped after step {step}")

    return callback


class TempDirTestCase(TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def write_config(self, raw: dict, name: str = "config.json") -> Path:
        path = self.tmp / name
        path.write_text(json.dumps(raw))
        return path


class ValidationTests(TempDirTestCase):
    def test_bundled_configs_are_valid(self):
        names = sorted(path.name for path in settings.EXAMPLE_CONFIG_DIR.glob("*.json"))
        self.assertEqual(
            names, ["analytic_bimodal.json", "analytic_gaussian.json", "diffusion_multi.json", "diffusion_single.json"]
        )
        for name in names:
            load_experiment_config(settings.EXAMPLE_CONFIG_DIR / name)

    def test_diffusion_single_schedule(self):
        config = load_experiment_config(settings.EXAMPLE_CONFIG_DIR / "diffusion_single.json")
        self.assertEqual(config.anneal.total_steps, 7)
        self.assertEqual([config.anneal.order(j) for j in range(1, 8)], [4, 4, 5, 5, 3, 3, 5])
        self.assertEqual(config.anneal.max_parameter_ratio, 0.5)
        self.assertEqual(config.anneal.integration_nodes, 24)
        self.assertEqual(config.problem.resolutions, (16, 64, 128))
        self.assertEqual(config.problem.truth, (0.25, 0.75))

    def test_defaults_fill_optional_keys(self):
        config = validate_experiment_config(analytic_raw(self.tmp))
        self.assertEqual(config.anneal.n_beta, settings.DEFAULT_N_BETA)
        self.assertEqual(config.anneal.rqmc_seed, 1)
        self.assertEqual(config.seeds.data, 0)
        self.assertTrue(config.output.density_grid)
        self.assertEqual(config.workers, 1)

    def test_collects_every_error(self):
        raw = analytic_raw(self.tmp)
        raw["anneal"]["thresholds"] = [0.5, "one"]
        raw["anneal"]["n_beta"] = "forty"
        raw["colour"] = "blue"
        del raw["output"]["directory"]
        with self.assertRaises(ConfigValidationError) as ctx:
            validate_experiment_config(raw)
        messages = "\n".join(ctx.exception.errors)
        self.assertGreaterEqual(len(ctx.exception.errors), 4)
        self.assertIn("anneal.thresholds[1]", messages)
        self.assertIn("anneal.n_beta", messages)
        self.assertIn("Extra=['colour']", messages)
        self.assertIn("Missing=['directory']", messages)

    def test_anneal_contract_errors_are_reported(self):
        raw = analytic_raw(self.tmp, thresholds=[0.8, 0.5], discount=1.5)
        with self.assertRaises(ConfigValidationError) as ctx:
            validate_experiment_config(raw)
        messages = "\n".join(ctx.exception.errors)
        self.assertIn("thresholds must increase", messages)
        self.assertIn("discount", messages)

    def test_resolutions_must_match_thresholds(self):
        raw = analytic_raw(self.tmp)
        raw["problem"] = {"kind": "diffusion-single", "resolutions": [16, 64, 128]}
        with self.assertRaises(ConfigValidationError) as ctx:
            validate_experiment_config(raw)
        self.assertIn("problem.resolutions has 3 levels", ctx.exception.errors[0])

    def test_unknown_target(self):
        raw = analytic_raw(self.tmp)
        raw["problem"]["target"] = "donut"
        with self.assertRaises(ConfigValidationError):
            validate_experiment_config(raw)

    def test_rejects_non_object_and_bad_json(self):
        with self.assertRaises(ConfigValidationError):
            validate_experiment_config([1, 2])
        path = self.tmp / "broken.json"
        path.write_text("{not json")
        with self.assertRaises(ConfigValidationError):
            load_experiment_config(path)


class EvaluationCacheTests(TempDirTestCase):
    def test_store_lookup_and_reload(self):
        path = self.tmp / "cache" / "evaluations.csv"
        points = np.array([[0.1, 0.2], [0.3, 0.4]])
        cache = EvaluationCache(path, dimension=2)
        cache.store(1, points, np.array([-1.5, -np.inf]))
        cache.store(2, points[:1], np.array([0.25]))
        cache.store(1, points, np.array([9.0, 9.0]))

        reloaded = EvaluationCache(path, dimension=2)
        self.assertEqual(len(reloaded), 3)
        self.assertEqual(reloaded.counts(), {1: 2, 2: 1})
        values, found = reloaded.lookup(1, np.array([[0.3, 0.4], [0.5, 0.5], [0.1, 0.2]]))
        np.testing.assert_array_equal(found, [True, False, True])
        self.assertEqual(values[0], -np.inf)
        self.assertEqual(values[2], -1.5)

    def test_key_ignores_last_digit_noise(self):
        cache = EvaluationCache(self.tmp / "c.csv", dimension=1)
        cache.store(1, np.array([[0.1]]), np.array([2.0]))
        _, found = cache.lookup(1, np.array([[np.nextafter(0.1, 1.0)]]))
        self.assertTrue(found[0])

    def test_bad_header_is_corruption(self):
        path = self.tmp / "c.csv"
        path.write_text("fidelity,x,y\n")
        with self.assertRaises(ArchiveCorruptedError):
            EvaluationCache(path, dimension=2)


class RunTests(TempDirTestCase):
    def run_analytic(self, directory: Path, **kwargs):
        return run_experiment(validate_experiment_config(analytic_raw(directory)), **kwargs)

    def test_writes_artifacts(self):
        run_dir = self.tmp / "run"
        summary = self.run_analytic(run_dir)

        self.assertEqual(summary.steps, 4)
        self.assertEqual(summary.status, RunStatus.SUCCEEDED)
        self.assertEqual(summary.model_calls, {1: 64, 2: 64})

        rows = read_rows(run_dir / "diagnostics.csv")
        self.assertEqual(list(rows[0].keys()), DIAGNOSTIC_COLUMNS)
        self.assertEqual([r["fidelity"] for r in rows], ["1", "1", "2", "2"])
        self.assertEqual([r["new_evals"] for r in rows], ["32"] * 4)
        self.assertEqual([r["cumulative_evals"] for r in rows], ["32", "64", "32", "64"])
        self.assertEqual(float(rows[-1]["beta"]), 1.0)
        for row in rows:
            self.assertTrue(np.isfinite(float(row["rmse"])))
            self.assertTrue(np.isfinite(float(row["mmd_gaussian"])))

        for j in range(1, 5):
            self.assertTrue((run_dir / f"quadrature_{j}.csv").exists())
        self.assertEqual(load_surrogate(run_dir / "surrogate_final.txt").dimension, 2)
        self.assertEqual(len(read_rows(run_dir / "samples.csv")), 64)
        self.assertEqual(len(read_rows(run_dir / "density_grid.csv")), settings.DENSITY_GRID_SIZE**2)
        self.assertTrue((run_dir / "data.json").exists())
        self.assertEqual(json.loads((run_dir / "config.json").read_text())["problem"]["target"], "gaussian")

        manifest = json.loads((run_dir / "archive" / "manifest.json").read_text())
        self.assertEqual(manifest["status"], "SUCCEEDED")
        self.assertIn("archive/step_004.json", manifest["files"])

    def test_cache_matches_reported_evaluations(self):
        run_dir = self.tmp / "run"
        self.run_analytic(run_dir)
        rows = read_rows(run_dir / "diagnostics.csv")
        last_per_fidelity = {int(r["fidelity"]): int(r["cumulative_evals"]) for r in rows}
        cache = EvaluationCache(run_dir / "cache" / "evaluations.csv", dimension=2)
        self.assertEqual(cache.counts(), last_per_fidelity)

    def test_rerun_uses_cache(self):
        run_dir = self.tmp / "run"
        self.run_analytic(run_dir)
        first = (run_dir / "diagnostics.csv").read_bytes()

        summary = self.run_analytic(run_dir)
        self.assertEqual(sum(summary.model_calls.values()), 0)
        self.assertEqual((run_dir / "diagnostics.csv").read_bytes(), first)
        self.assertEqual([r["new_evals"] for r in read_rows(run_dir / "diagnostics.csv")], ["32"] * 4)

    def test_resume_after_interrupt_matches_uninterrupted_run(self):
        full_dir = self.tmp / "full"
        self.run_analytic(full_dir)

        cut_dir = self.tmp / "cut"
        with self.assertRaises(RunFailedError):
            self.run_analytic(cut_dir, on_step=interrupt_after(2))
        manifest = json.loads((cut_dir / "archive" / "manifest.json").read_text())
        self.assertEqual(manifest["status"], "FAILED")
        self.assertEqual(len(read_rows(cut_dir / "diagnostics.csv")), 2)

        summary = resume_run(cut_dir)
        self.assertTrue(summary.resumed)
        self.assertEqual(summary.model_calls, {1: 0, 2: 64})
        self.assertEqual(
            (cut_dir / "diagnostics.csv").read_bytes(),
            (full_dir / "diagnostics.csv").read_bytes(),
        )
        self.assertEqual(
            (cut_dir / "surrogate_final.txt").read_text(),
            (full_dir / "surrogate_final.txt").read_text(),
        )

    def test_resume_completed_run_is_noop(self):
        run_dir = self.tmp / "run"
        self.run_analytic(run_dir)
        before = (run_dir / "diagnostics.csv").read_bytes()
        summary = resume_run(run_dir)
        self.assertEqual(summary.status, RunStatus.SUCCEEDED)
        self.assertEqual(summary.model_calls, {})
        self.assertEqual((run_dir / "diagnostics.csv").read_bytes(), before)

    def test_tampered_archive_is_refused(self):
        run_dir = self.tmp / "run"
        with self.assertRaises(RunFailedError):
            self.run_analytic(run_dir, on_step=interrupt_after(2))
        with (run_dir / "archive" / "step_001.json").open("a") as handle:
            handle.write(" ")
        with self.assertRaises(ArchiveCorruptedError) as ctx:
            resume_run(run_dir)
        self.assertIn("archive/step_001.json: checksum mismatch", ctx.exception.report)

    def test_config_mismatch_is_refused(self):
        run_dir = self.tmp / "run"
        with self.assertRaises(RunFailedError):
            self.run_analytic(run_dir, on_step=interrupt_after(1))
        other = self.write_config(analytic_raw(run_dir, sample_counts=48), "other.json")
        with self.assertRaises(ConfigMismatchError):
            resume_run(run_dir, other)
        with self.assertRaises(ConfigMismatchError):
            run_experiment(load_experiment_config(other))

    def test_metrics_can_be_disabled(self):
        raw = analytic_raw(self.tmp / "run")
        raw["metrics"] = {"enabled": False}
        run_experiment(validate_experiment_config(raw))
        rows = read_rows(self.tmp / "run" / "diagnostics.csv")
        self.assertEqual({r["rmse"] for r in rows}, {""})

    def test_emit_plots_writes_report(self):
        run_dir = self.tmp / "run"
        self.run_analytic(run_dir)
        written = emit_plots(run_dir)
        self.assertEqual([p.name for p in written], ["density_grid.csv", "samples.csv", "report.xlsx"])

        wb = load_workbook(run_dir / "report.xlsx")
        self.assertEqual(wb.sheetnames, ["diagnostics", "final quadrature"])
        ws = wb["diagnostics"]
        self.assertEqual([c.value for c in ws[1]], DIAGNOSTIC_COLUMNS)
        self.assertTrue(ws["A1"].font.bold)
        self.assertEqual(ws.max_row, 5)
        self.assertEqual(wb["final quadrature"].max_row, 1 + 64)

    def test_emit_plots_respects_output_flags(self):
        raw = analytic_raw(self.tmp / "run")
        raw["output"].update({"density_grid": False, "samples": False})
        run_experiment(validate_experiment_config(raw))

        written = emit_plots(self.tmp / "run")
        self.assertEqual([p.name for p in written], ["report.xlsx"])
        self.assertFalse((self.tmp / "run" / "density_grid.csv").exists())
        self.assertFalse((self.tmp / "run" / "samples.csv").exists())

    def test_emit_plots_needs_finished_run(self):
        run_dir = self.tmp / "run"
        with self.assertRaises(RunFailedError):
            self.run_analytic(run_dir, on_step=interrupt_after(1))
        with self.assertRaises(RunFailedError):
            emit_plots(run_dir)


class CommandTests(TempDirTestCase):
    def invoke(self, *args):
        return CliRunner().invoke(cli, [str(a) for a in args])

    def test_validate(self):
        ok = self.invoke("validate", settings.EXAMPLE_CONFIG_DIR / "analytic_gaussian.json")
        self.assertEqual(ok.exit_code, settings.EXIT_OK, ok.output)

        raw = analytic_raw(self.tmp)
        raw["anneal"]["sample_counts"] = 0
        raw["workers"] = 0
        bad = self.invoke("validate", self.write_config(raw))
        self.assertEqual(bad.exit_code, settings.EXIT_CONFIG_ERROR)
        self.assertIn("workers", bad.output)
        self.assertIn("sample counts", bad.output)

    def test_run_resume_and_emit_plots(self):
        config = self.write_config(analytic_raw(self.tmp / "ignored"))
        run_dir = self.tmp / "run"

        result = self.invoke("run", config, "--output", run_dir)
        self.assertEqual(result.exit_code, settings.EXIT_OK, result.output)
        self.assertTrue((run_dir / "diagnostics.csv").exists())
        self.assertFalse((self.tmp / "ignored").exists())

        result = self.invoke("resume", run_dir)
        self.assertEqual(result.exit_code, settings.EXIT_OK, result.output)
        self.assertIn("SUCCEEDED", result.output)

        result = self.invoke("emit-plots", run_dir)
        self.assertEqual(result.exit_code, settings.EXIT_OK, result.output)
        self.assertTrue((run_dir / "report.xlsx").exists())

    def test_exit_codes_for_failures(self):
        config = self.write_config(analytic_raw(self.tmp / "run"))
        self.assertEqual(self.invoke("run", config).exit_code, settings.EXIT_OK)

        other = self.write_config(analytic_raw(self.tmp / "run", orders=3), "other.json")
        result = self.invoke("resume", self.tmp / "run", "--config", other)
        self.assertEqual(result.exit_code, settings.EXIT_CONFIG_ERROR)

        (self.tmp / "run" / "data.json").write_text("{}")
        result = self.invoke("resume", self.tmp / "run")
        self.assertEqual(result.exit_code, settings.EXIT_RUNTIME_ERROR)
        self.assertIn("data.json: checksum mismatch", result.output)


@skipUnless(RUN_DIFFUSION_ACCEPTANCE, "set ANNEALMAP_ACCEPTANCE=1 for the end-to-end diffusion runs")
class DiffusionAcceptanceTests(TempDirTestCase):
    def test_single_source_run(self):
        config = load_experiment_config(settings.EXAMPLE_CONFIG_DIR / "diffusion_single.json")
        started = time.perf_counter()
        summary = run_experiment(config.with_output_directory(self.tmp / "single"))
        elapsed = time.perf_counter() - started
        rows = read_rows(self.tmp / "single" / "diagnostics.csv")

        self.assertEqual([int(r["fidelity"]) for r in rows], [1, 1, 1, 1, 2, 3, 3])
        self.assertEqual(summary.model_calls, {1: 100, 2: 25, 3: 50})
        self.assertEqual(float(rows[-1]["beta"]), 1.0)
        self.assertLessEqual(float(rows[-1]["rmse"]), 0.2)
        self.assertLessEqual(float(rows[-1]["forstner"]), 0.25)
        self.assertLessEqual(float(rows[-1]["mmd_gaussian"]), 0.3)
        self.assertLessEqual(float(rows[-1]["mmd_matern15"]), 0.3)
        self.assertLessEqual(elapsed, 300.0)

    def test_multi_source_run(self):
        config = load_experiment_config(settings.EXAMPLE_CONFIG_DIR / "diffusion_multi.json")
        run_experiment(config.with_output_directory(self.tmp / "multi"))
        rows = read_rows(self.tmp / "multi" / "diagnostics.csv")

        self.assertEqual([int(r["fidelity"]) for r in rows], [1, 1, 1, 2, 3, 3, 3])
        self.assertLessEqual(float(rows[-1]["forstner"]), 0.15)

        final = read_rule_csv(self.tmp / "multi" / f"quadrature_{len(rows)}.csv")
        np.testing.assert_allclose(final.weights @ final.points, [0.5, 0.5], atol=0.05)

        draws = np.array([[float(v) for v in r.values()] for r in read_rows(self.tmp / "multi" / "samples.csv")])
        self.assertEqual(len(draws), 4096)
        centers = np.array(settings.MULTI_SOURCE_CENTERS)
        nearest = np.argmin(((draws[:, None, :] - centers[None]) ** 2).sum(axis=2), axis=1)
        self.assertGreaterEqual(min(np.mean(nearest == 0), np.mean(nearest == 1)), 0.2)
