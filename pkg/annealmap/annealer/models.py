from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal, Mapping, Optional, Sequence, Union

import numpy as np

from annealmap import settings
from annealmap.exceptions import ContractViolationError
from metrics import ErrorMetrics
from mis import StageMemo
from objective import FitConfig
from quadrature import QuadratureRule
from transport import Density

ORDER_POLICIES = ("schedule", "ress_bands")

Schedule = Union[int, float, Sequence[int], Sequence[float]]


def _as_schedule(value: Schedule, name: str) -> tuple:
    values = tuple(value) if isinstance(value, (list, tuple)) else (value,)
    if not values:
        raise ContractViolationError(f"{name} schedule must not be empty")
    return values


def schedule_value(schedule: tuple, step: int):
    """Value of a per-step schedule at 1-based step; a short schedule repeats its last value."""
    return schedule[min(step, len(schedule)) - 1]


@dataclass(frozen=True)
class AnnealConfig:
    """
    Settings of one generalized-annealing run.

    Schedules (sample counts, orders, regularization) are scalars or per-step
    sequences indexed from step 1.
    """

    thresholds: tuple[float, ...] = (1.0,)
    sample_counts: Schedule = 64
    orders: Schedule = 3
    steps_per_fidelity: Optional[tuple[int, ...]] = None
    n_beta: int = settings.DEFAULT_N_BETA
    discount: float = settings.DEFAULT_DISCOUNT
    ress_floor: float = settings.DEFAULT_RESS_FLOOR
    gamma: float = settings.DEFAULT_GAMMA
    regularization: Schedule = settings.DEFAULT_REGULARIZATION
    fit: FitConfig = field(default_factory=FitConfig)
    refine_steps: int = settings.DEFAULT_REFINE_STEPS
    rqmc_seed: int = 0
    workers: int = 1
    order_policy: Literal["schedule", "ress_bands"] = "schedule"
    integration_nodes: Optional[int] = None
    # Caps map parameters at this multiple of the effective sample size rESS * N.
    max_parameter_ratio: Optional[float] = None

    def __post_init__(self) -> None:
        thresholds = tuple(float(t) for t in self.thresholds)
        object.__setattr__(self, "thresholds", thresholds)
        object.__setattr__(self, "sample_counts", _as_schedule(self.sample_counts, "sample count"))
        object.__setattr__(self, "orders", _as_schedule(self.orders, "order"))
        object.__setattr__(self, "regularization", _as_schedule(self.regularization, "regularization"))
        if self.steps_per_fidelity is not None:
            object.__setattr__(self, "steps_per_fidelity", tuple(int(s) for s in self.steps_per_fidelity))

        errors = self.problems()
        if errors:
            raise ContractViolationError("; ".join(errors))

    def problems(self) -> list[str]:
        errors = []
        t = self.thresholds
        if not t or t[-1] != 1.0 or t[0] <= 0.0 or any(b <= a for a, b in zip(t, t[1:])):
            errors.append(f"thresholds must increase strictly from above 0 to 1, got {list(t)}")
        if self.n_beta < 2:
            errors.append(f"n_beta must be >= 2, got {self.n_beta}")
        if not 0.0 < self.discount < 1.0:
            errors.append(f"discount must lie in (0, 1), got {self.discount}")
        if not 0.0 < self.ress_floor < 1.0:
            errors.append(f"ress_floor must lie in (0, 1), got {self.ress_floor}")
        if not self.gamma > 0.0:
            errors.append(f"gamma must be > 0, got {self.gamma}")
        if any(int(n) != n or n < 1 for n in self.sample_counts):
            errors.append(f"sample counts must be integers >= 1, got {list(self.sample_counts)}")
        if any(int(m) != m or m < 1 for m in self.orders):
            errors.append(f"orders must be integers >= 1, got {list(self.orders)}")
        if any(lam < 0.0 for lam in self.regularization):
            errors.append(f"regularization must be >= 0, got {list(self.regularization)}")
        if self.refine_steps < 0:
            errors.append(f"refine_steps must be >= 0, got {self.refine_steps}")
        if self.rqmc_seed < 0:
            errors.append(f"rqmc_seed must be >= 0, got {self.rqmc_seed}")
        if self.workers < 1:
            errors.append(f"workers must be >= 1, got {self.workers}")
        if self.order_policy not in ORDER_POLICIES:
            errors.append(f"order_policy must be one of {ORDER_POLICIES}, got {self.order_policy!r}")
        if self.integration_nodes is not None and self.integration_nodes < 1:
            errors.append(f"integration_nodes must be >= 1, got {self.integration_nodes}")
        if self.max_parameter_ratio is not None and not self.max_parameter_ratio > 0.0:
            errors.append(f"max_parameter_ratio must be > 0, got {self.max_parameter_ratio}")

        if self.steps_per_fidelity is not None:
            if len(self.steps_per_fidelity) != len(t):
                errors.append(
                    f"steps_per_fidelity has {len(self.steps_per_fidelity)} entries for {len(t)} fidelities"
                )
            if any(s < 1 for s in self.steps_per_fidelity):
                errors.append(f"steps_per_fidelity entries must be >= 1, got {list(self.steps_per_fidelity)}")
            total = sum(self.steps_per_fidelity)
            for name, schedule in (
                ("sample_counts", self.sample_counts),
                ("orders", self.orders),
                ("regularization", self.regularization),
            ):
                if len(schedule) not in (1, total):
                    errors.append(f"{name} has {len(schedule)} entries; expected 1 or {total}")
        return errors

    @property
    def level_count(self) -> int:
        return len(self.thresholds)

    @property
    def total_steps(self) -> Optional[int]:
        return None if self.steps_per_fidelity is None else sum(self.steps_per_fidelity)

    def threshold(self, fidelity: int) -> float:
        return self.thresholds[fidelity - 1]

    def sample_count(self, step: int) -> int:
        return int(schedule_value(self.sample_counts, step))

    def order(self, step: int) -> int:
        return int(schedule_value(self.orders, step))

    def fit_config(self, step: int) -> FitConfig:
        return self.fit.with_regularization(float(schedule_value(self.regularization, step)))

    def with_overrides(self, **changes) -> AnnealConfig:
        return replace(self, **changes)


@dataclass(frozen=True)
class BetaChoice:
    beta: float
    rule: QuadratureRule
    ress: float
    threshold: float
    forced: bool = False
    stalled: bool = False


@dataclass(frozen=True)
class StepDiagnostics:
    """
    One row of the annealing log. Wall time is informational only.

    `new_evaluations` counts the abscissae whose likelihood the step needed,
    whether the model or an evaluation cache supplied them; the cumulative
    counts add these up per fidelity. Model calls actually made are logged
    per step and reported by the likelihood counters.
    """

    step: int
    fidelity: int
    beta: float
    parameter_count: int
    ress: float
    new_evaluations: int
    cumulative_evaluations: Mapping[int, int]
    wall_time: float = 0.0
    order: int = 0
    final_loss: float = float("nan")
    forced: bool = False
    stalled: bool = False
    subfloor: bool = False
    metrics: Optional[ErrorMetrics] = None

    @property
    def total_evaluations(self) -> int:
        return int(sum(self.cumulative_evaluations.values()))

    def with_metrics(self, metrics: ErrorMetrics) -> StepDiagnostics:
        return replace(self, metrics=metrics)


@dataclass
class AnnealState:
    """
    Mutable progress of a run; enough to resume after the last completed step.

    `memos` holds the current fidelity only. `steps_in_fidelity` counts the
    steps already taken at `fidelity`.
    """

    surrogate: Density
    step: int = 0
    fidelity: int = 1
    steps_in_fidelity: int = 0
    beta: float = 0.0
    ress: float = 1.0
    order: int = 0
    refine_done: int = 0
    finished: bool = False
    memos: list[StageMemo] = field(default_factory=list)
    evaluations: dict[int, int] = field(default_factory=dict)
    diagnostics: list[StepDiagnostics] = field(default_factory=list)
    rule: Optional[QuadratureRule] = None

    def advance_fidelity(self) -> None:
        self.fidelity += 1
        self.steps_in_fidelity = 0
        self.memos = []

    def record(self, diagnostics: StepDiagnostics) -> None:
        self.diagnostics.append(diagnostics)
        self.step = diagnostics.step


@dataclass(frozen=True, eq=False)
class AnnealResult:
    surrogate: Density
    rule: QuadratureRule
    diagnostics: tuple[StepDiagnostics, ...]
    memos: tuple[StageMemo, ...]
    evaluations: Mapping[int, int]

    @property
    def betas(self) -> np.ndarray:
        return np.array([row.beta for row in self.diagnostics])

    @property
    def fidelities(self) -> list[int]:
        return [row.fidelity for row in self.diagnostics]
