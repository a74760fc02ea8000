"""
Per-step archive of an annealing run and its integrity manifest.

    <run>/archive/manifest.json     status, config hash, SHA-256 per file
    <run>/archive/step_001.json     diagnostics, state, surrogate, rule, memos
    ...

Floats are written with shortest round-trip decimals (-Infinity allowed), so
a reloaded state continues bit-identically.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Optional

import numpy as np

from annealer import AnnealState, StepDiagnostics
from metrics import ErrorMetrics
from mis import StageMemo
from quadrature import QuadratureRule
from transport.services import dumps_surrogate, loads_surrogate

from .exceptions import ArchiveCorruptedError
from .models import RunManifest

logger = logging.getLogger(__name__)

ARCHIVE_DIR = "archive"
MANIFEST_NAME = "manifest.json"


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as f:
        for chunk in iter(lambda: f.read(1024 * 1024), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json_atomic(path: Path, document: Any) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(document, indent=1, sort_keys=True), encoding="utf-8")
    os.replace(tmp, path)


def metrics_to_dict(metrics: Optional[ErrorMetrics]) -> Optional[dict[str, Any]]:
    if metrics is None:
        return None
    return {
        "rmse": metrics.rmse,
        "forstner": metrics.forstner,
        "mmd_matern": metrics.mmd_matern,
        "mmd_gaussian": metrics.mmd_gaussian,
        "mean": list(metrics.mean),
        "absolute": sorted(metrics.absolute),
    }


def metrics_from_dict(document: Optional[dict[str, Any]]) -> Optional[ErrorMetrics]:
    if document is None:
        return None
    return ErrorMetrics(
        rmse=document["rmse"],
        forstner=document["forstner"],
        mmd_matern=document["mmd_matern"],
        mmd_gaussian=document["mmd_gaussian"],
        mean=tuple(document["mean"]),
        absolute=frozenset(document["absolute"]),
    )


def diagnostics_to_dict(row: StepDiagnostics) -> dict[str, Any]:
    return {
        "step": row.step,
        "fidelity": row.fidelity,
        "beta": row.beta,
        "parameter_count": row.parameter_count,
        "ress": row.ress,
        "new_evaluations": row.new_evaluations,
        "cumulative_evaluations": {str(k): v for k, v in row.cumulative_evaluations.items()},
        "wall_time": row.wall_time,
        "order": row.order,
        "final_loss": row.final_loss,
        "forced": row.forced,
        "stalled": row.stalled,
        "subfloor": row.subfloor,
        "metrics": metrics_to_dict(row.metrics),
    }


def diagnostics_from_dict(document: dict[str, Any]) -> StepDiagnostics:
    return StepDiagnostics(
        step=document["step"],
        fidelity=document["fidelity"],
        beta=document["beta"],
        parameter_count=document["parameter_count"],
        ress=document["ress"],
        new_evaluations=document["new_evaluations"],
        cumulative_evaluations={int(k): v for k, v in document["cumulative_evaluations"].items()},
        wall_time=document["wall_time"],
        order=document["order"],
        final_loss=document["final_loss"],
        forced=document["forced"],
        stalled=document["stalled"],
        subfloor=document["subfloor"],
        metrics=metrics_from_dict(document["metrics"]),
    )


def _memo_to_dict(memo: StageMemo) -> dict[str, Any]:
    return {
        "surrogate": dumps_surrogate(memo.surrogate),
        "points": memo.points.tolist(),
        "base_weights": memo.base_weights.tolist(),
        "log_likelihood": memo.log_likelihood.tolist(),
        "fidelity": memo.fidelity,
    }


def _memo_from_dict(document: dict[str, Any]) -> StageMemo:
    return StageMemo(
        surrogate=loads_surrogate(document["surrogate"]),
        points=np.array(document["points"], dtype=float),
        base_weights=np.array(document["base_weights"], dtype=float),
        log_likelihood=np.array(document["log_likelihood"], dtype=float),
        fidelity=document["fidelity"],
    )


class RunArchive:
    """
    Reads and writes the archive of one run directory.

    The manifest is rewritten after every change; a step file counts as
    archived only once its digest is in the manifest.
    """

    def __init__(self, run_dir: Path) -> None:
        self.run_dir = Path(run_dir)
        self.directory = self.run_dir / ARCHIVE_DIR
        self.manifest_path = self.directory / MANIFEST_NAME
        self.manifest: Optional[RunManifest] = None

    def exists(self) -> bool:
        return self.manifest_path.exists()

    def create(self, config_hash: str) -> RunManifest:
        """Start a fresh archive, dropping any previous step files."""
        self.directory.mkdir(parents=True, exist_ok=True)
        for stale in self.directory.glob("step_*.json"):
            stale.unlink()
        self.manifest = RunManifest(config_sha256=config_hash)
        self.save_manifest()
        return self.manifest

    def open(self) -> RunManifest:
        if not self.exists():
            raise ArchiveCorruptedError([f"{self.manifest_path} is missing"])
        try:
            document = json.loads(self.manifest_path.read_text(encoding="utf-8"))
            self.manifest = RunManifest.from_dict(document)
        except (ValueError, KeyError, TypeError) as exc:
            raise ArchiveCorruptedError([f"{self.manifest_path}: {exc}"]) from exc
        return self.manifest

    def save_manifest(self) -> None:
        write_json_atomic(self.manifest_path, self.manifest.to_dict())

    def record(self, relative: str) -> None:
        """Store the digest of a file under the run directory."""
        self.manifest.files[relative] = sha256_file(self.run_dir / relative)
        self.save_manifest()

    @staticmethod
    def step_name(step: int) -> str:
        return f"{ARCHIVE_DIR}/step_{step:03d}.json"

    def archived_steps(self) -> list[int]:
        prefix = f"{ARCHIVE_DIR}/step_"
        return sorted(int(name[len(prefix):-len(".json")]) for name in self.manifest.files if name.startswith(prefix))

    def save_step(self, state: AnnealState) -> None:
        document = {
            "diagnostics": diagnostics_to_dict(state.diagnostics[-1]),
            "state": {
                "step": state.step,
                "fidelity": state.fidelity,
                "steps_in_fidelity": state.steps_in_fidelity,
                "beta": state.beta,
                "ress": state.ress,
                "order": state.order,
                "refine_done": state.refine_done,
                "finished": state.finished,
                "evaluations": {str(k): v for k, v in state.evaluations.items()},
            },
            "surrogate": dumps_surrogate(state.surrogate),
            "rule": {
                "points": state.rule.points.tolist(),
                "weights": state.rule.weights.tolist(),
                "normalized": state.rule.normalized,
            },
            "memos": [_memo_to_dict(memo) for memo in state.memos],
        }
        name = self.step_name(state.step)
        write_json_atomic(self.run_dir / name, document)
        self.record(name)
        logger.debug(f"archived step {state.step} to {name}")

    def verify(self) -> None:
        """Raise ArchiveCorruptedError listing every file whose digest differs."""
        report = []
        for name, digest in sorted(self.manifest.files.items()):
            path = self.run_dir / name
            if not path.exists():
                report.append(f"{name}: missing")
            elif sha256_file(path) != digest:
                report.append(f"{name}: checksum mismatch")
        if report:
            raise ArchiveCorruptedError(report)

    def _read_step(self, step: int) -> dict[str, Any]:
        name = self.step_name(step)
        try:
            return json.loads((self.run_dir / name).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ArchiveCorruptedError([f"{name}: {exc}"]) from exc

    def load_state(self) -> Optional[AnnealState]:
        """State after the last archived step, or None when no step was archived."""
        steps = self.archived_steps()
        if not steps:
            return None
        if steps != list(range(1, steps[-1] + 1)):
            raise ArchiveCorruptedError([f"archived steps are not contiguous: {steps}"])

        try:
            diagnostics = [diagnostics_from_dict(self._read_step(j)["diagnostics"]) for j in steps[:-1]]
            document = self._read_step(steps[-1])
            diagnostics.append(diagnostics_from_dict(document["diagnostics"]))
            fields = document["state"]
            rule = document["rule"]
            state = AnnealState(
                surrogate=loads_surrogate(document["surrogate"]),
                step=fields["step"],
                fidelity=fields["fidelity"],
                steps_in_fidelity=fields["steps_in_fidelity"],
                beta=fields["beta"],
                ress=fields["ress"],
                order=fields["order"],
                refine_done=fields["refine_done"],
                finished=fields["finished"],
                memos=[_memo_from_dict(memo) for memo in document["memos"]],
                evaluations={int(k): v for k, v in fields["evaluations"].items()},
                diagnostics=diagnostics,
                rule=QuadratureRule(
                    points=np.array(rule["points"], dtype=float),
                    weights=np.array(rule["weights"], dtype=float),
                    normalized=rule["normalized"],
                ),
            )
        except (KeyError, TypeError) as exc:
            raise ArchiveCorruptedError([f"step {steps[-1]}: malformed archive entry ({exc})"]) from exc
        logger.info(f"loaded archived state after step {state.step} (fidelity {state.fidelity})")
        return state
