from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from annealmap import settings
from annealmap.exceptions import ContractViolationError, DomainError

from .exceptions import ForwardSolveError


def default_sensors() -> np.ndarray:
    """16 sensors at (0.2 i, 0.2 j), i, j in 1..4."""
    ticks = 0.2 * np.arange(1, 5)
    grid_x, grid_y = np.meshgrid(ticks, ticks, indexing="ij")
    return np.column_stack([grid_x.ravel(), grid_y.ravel()])


@dataclass(frozen=True, eq=False)
class DiffusionProblem:
    """
    Dirichlet Poisson inversion on the unit square.

    Delta u = A exp(-|x - theta|^2 / (2 width^2)) (+ a second source at
    second_center when multi_source), u = 0 on the boundary, observed at
    interior sensors. Resolutions are grid intervals per side, one per fidelity.
    """

    resolutions: tuple[int, ...] = settings.SINGLE_SOURCE_RESOLUTIONS
    data_resolution: int = settings.DATA_RESOLUTION
    width: float = settings.DIFFUSION_WIDTH
    sensors: np.ndarray = field(default_factory=default_sensors)
    multi_source: bool = False
    second_center: tuple[float, float] = settings.MULTI_SOURCE_CENTERS[1]

    def __post_init__(self) -> None:
        resolutions = tuple(int(r) for r in self.resolutions)
        if not resolutions:
            raise ContractViolationError("a diffusion problem needs at least one resolution")
        if any(r < 8 for r in resolutions) or self.data_resolution < 8:
            raise ContractViolationError("grid resolutions must be >= 8")
        if any(b <= a for a, b in zip(resolutions, resolutions[1:])):
            raise ContractViolationError(f"resolutions must be strictly increasing, got {resolutions}")
        if self.width <= 0.0:
            raise ContractViolationError("source width must be > 0")
        sensors = np.array(self.sensors, dtype=float)
        if sensors.ndim != 2 or sensors.shape[1] != 2:
            raise ContractViolationError("sensors must be an (m, 2) array")
        if np.any(sensors <= 0.0) or np.any(sensors >= 1.0):
            raise DomainError("sensors must be interior to the unit square")
        sensors.setflags(write=False)
        object.__setattr__(self, "resolutions", resolutions)
        object.__setattr__(self, "sensors", sensors)

    @property
    def amplitude(self) -> float:
        return 5.0 / (math.tau * self.width)

    @property
    def observation_count(self) -> int:
        return int(self.sensors.shape[0])


@dataclass(frozen=True, eq=False)
class DiffusionForwardModel:
    """G(theta): single-source solve at one resolution, observed at the sensors. Picklable."""

    problem: DiffusionProblem
    resolution: int

    def __call__(self, theta: np.ndarray) -> np.ndarray:
        from .services.poisson import observe, solve_poisson

        field_values = solve_poisson(self.problem, self.resolution, theta, multi_source=False)
        return observe(field_values, self.problem.sensors)


class CountingLikelihood:
    """
    Log-likelihoods indexed by fidelity level 1..L with per-level call counters.

    Counters are the only mutable state and are updated under a lock.
    """

    def __init__(self, level_count: int, dimension: int) -> None:
        if level_count < 1:
            raise ContractViolationError("a likelihood hierarchy needs at least one fidelity")
        self.dimension = dimension
        self._counts = {level: 0 for level in range(1, level_count + 1)}
        self._lock = threading.Lock()

    @property
    def levels(self) -> tuple[int, ...]:
        return tuple(self._counts)

    @property
    def max_level(self) -> int:
        return len(self._counts)

    def counts(self) -> dict[int, int]:
        with self._lock:
            return dict(self._counts)

    def reset_counts(self) -> None:
        with self._lock:
            for level in self._counts:
                self._counts[level] = 0

    def _check_level(self, level: int) -> None:
        if level not in self._counts:
            raise ContractViolationError(f"fidelity level {level} not in {self.levels}")

    def _check_points(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.dimension:
            raise DomainError(f"expected parameters of dimension {self.dimension}, got {points.shape[1]}")
        if not np.all(np.isfinite(points)) or np.any(points < 0.0) or np.any(points > 1.0):
            raise DomainError("parameters must lie in [0,1]^d")
        return points

    def _evaluate(self, level: int, points: np.ndarray, pool: Any) -> np.ndarray:
        raise NotImplementedError

    def log_likelihood_batch(
        self, level: int, points: np.ndarray, *, pool: Any = None, counted: bool = True
    ) -> np.ndarray:
        """
        Unnormalized log-likelihoods at a batch of parameters.

        Uncounted evaluations are reserved for reference-posterior construction.
        """
        self._check_level(level)
        points = self._check_points(points)
        values = np.asarray(self._evaluate(level, points, pool), dtype=float)
        if counted:
            with self._lock:
                self._counts[level] += points.shape[0]
        return values

    def log_likelihood(self, level: int, theta: np.ndarray) -> float:
        return float(self.log_likelihood_batch(level, np.asarray(theta, dtype=float)[None, :])[0])


class LikelihoodHierarchy(CountingLikelihood):
    """
    Gaussian likelihoods exp(-|G_l(theta) - y|^2 / (2 sigma^2)) over a ladder of forward models.
    """

    def __init__(
        self,
        forward_models: Sequence[Callable[[np.ndarray], np.ndarray]],
        observations: np.ndarray,
        noise_variance: float,
        *,
        dimension: int = 2,
    ) -> None:
        super().__init__(len(forward_models), dimension)
        if not noise_variance > 0.0:
            raise ContractViolationError(f"noise variance must be > 0, got {noise_variance!r}")
        self.forward_models = tuple(forward_models)
        self.observations = np.array(observations, dtype=float).reshape(-1)
        self.observations.setflags(write=False)
        self.noise_variance = float(noise_variance)

    def forward(self, level: int, theta: np.ndarray) -> np.ndarray:
        self._check_level(level)
        return np.asarray(self.forward_models[level - 1](np.asarray(theta, dtype=float)))

    def misfit(self, outputs: np.ndarray) -> np.ndarray:
        residual = np.atleast_2d(outputs) - self.observations
        return -np.sum(residual**2, axis=1) / (2.0 * self.noise_variance)

    def _evaluate(self, level: int, points: np.ndarray, pool: Any) -> np.ndarray:
        model = self.forward_models[level - 1]
        try:
            if pool is not None:
                outputs = pool.map(model, list(points))
            else:
                outputs = [model(theta) for theta in points]
        except ForwardSolveError as exc:
            raise ForwardSolveError(
                f"fidelity {level}: {exc}",
                theta=exc.theta,
                fidelity=level,
                resolution=exc.resolution,
                iterations=exc.iterations,
            ) from exc
        outputs = np.asarray(outputs, dtype=float)
        if outputs.shape[1] != self.observations.shape[0]:
            raise ContractViolationError(
                f"forward model returned {outputs.shape[1]} observations, data has {self.observations.shape[0]}"
            )
        return self.misfit(outputs)


class AnalyticTarget(CountingLikelihood):
    """Closed-form log-likelihood on [0,1]^d, optionally repeated over several fidelity levels."""

    def __init__(
        self,
        name: str,
        functions: Sequence[Callable[[np.ndarray], np.ndarray]],
        *,
        dimension: int = 2,
        description: Optional[str] = None,
    ) -> None:
        super().__init__(len(functions), dimension)
        self.name = name
        self.functions = tuple(functions)
        self.description = description or name

    def _evaluate(self, level: int, points: np.ndarray, pool: Any) -> np.ndarray:
        return self.functions[level - 1](points)
