from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Optional

from annealer import AnnealConfig
from annealmap import settings

PROBLEM_KINDS = ("diffusion-single", "diffusion-multi", "analytic")


def canonical_json(document: Any) -> str:
    return json.dumps(document, sort_keys=True, separators=(",", ":"))


def config_sha256(raw: dict[str, Any]) -> str:
    return hashlib.sha256(canonical_json(raw).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ProblemSpec:
    kind: str
    target: Optional[str] = None
    truth: Optional[tuple[float, float]] = None
    noise_variance: float = settings.DEFAULT_NOISE_VARIANCE
    resolutions: Optional[tuple[int, ...]] = None
    data_resolution: int = settings.DATA_RESOLUTION
    second_center: Optional[tuple[float, float]] = None


@dataclass(frozen=True)
class Seeds:
    data: int = 0
    rqmc: int = 0
    sampling: int = 0


@dataclass(frozen=True)
class OutputSpec:
    directory: Path
    density_grid: bool = True
    samples: bool = True
    quadrature: bool = True
    sample_count: int = settings.DEFAULT_SAMPLE_COUNT


@dataclass(frozen=True)
class MetricsSpec:
    enabled: bool = True
    reference_order: int = settings.DEFAULT_REFERENCE_ORDER
    pullback_points: int = settings.DEFAULT_PULLBACK_POINTS
    bandwidth: float = settings.DEFAULT_MMD_BANDWIDTH


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """
    A validated experiment.

    `raw` is the JSON document as read; its hash identifies the run.
    """

    problem: ProblemSpec
    anneal: AnnealConfig
    output: OutputSpec
    seeds: Seeds = field(default_factory=Seeds)
    metrics: MetricsSpec = field(default_factory=MetricsSpec)
    workers: int = 1
    raw: dict[str, Any] = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return config_sha256(self.raw)

    def with_output_directory(self, directory: Path) -> ExperimentConfig:
        output = OutputSpec(**{**asdict(self.output), "directory": Path(directory)})
        return ExperimentConfig(
            problem=self.problem,
            anneal=self.anneal,
            output=output,
            seeds=self.seeds,
            metrics=self.metrics,
            workers=self.workers,
            raw=self.raw,
        )


class RunStatus(str, Enum):
    PENDING = "PENDING"
    RUNNING = "RUNNING"
    SUCCEEDED = "SUCCEEDED"
    FAILED = "FAILED"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class RunManifest:
    """
    Status and integrity record of a run directory.

    `files` maps archive-relative paths to SHA-256 digests.
    """

    config_sha256: str
    status: RunStatus = RunStatus.PENDING
    files: dict[str, str] = field(default_factory=dict)
    error: Optional[str] = None
    started_at: Optional[str] = None
    finished_at: Optional[str] = None

    def mark_running(self) -> None:
        self.status = RunStatus.RUNNING
        self.error = None
        self.started_at = _now()
        self.finished_at = None

    def mark_succeeded(self) -> None:
        self.status = RunStatus.SUCCEEDED
        self.finished_at = _now()

    def mark_failed(self, error: str) -> None:
        self.status = RunStatus.FAILED
        self.error = error
        self.finished_at = _now()

    def to_dict(self) -> dict[str, Any]:
        document = asdict(self)
        document["status"] = self.status.value
        return document

    @classmethod
    def from_dict(cls, document: dict[str, Any]) -> RunManifest:
        return cls(
            config_sha256=document["config_sha256"],
            status=RunStatus(document["status"]),
            files=dict(document.get("files", {})),
            error=document.get("error"),
            started_at=document.get("started_at"),
            finished_at=document.get("finished_at"),
        )


@dataclass(frozen=True)
class RunSummary:
    output_dir: Path
    steps: int
    model_calls: dict[int, int]
    status: RunStatus
    resumed: bool = False
