from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

from annealmap import settings
from annealmap.exceptions import ContractViolationError

KERNEL_FAMILIES = ("gaussian", "matern15")


@dataclass(frozen=True)
class KernelSpec:
    family: Literal["gaussian", "matern15"]
    bandwidth: float = settings.DEFAULT_MMD_BANDWIDTH

    def __post_init__(self) -> None:
        if self.family not in KERNEL_FAMILIES:
            raise ContractViolationError(f"kernel family must be one of {KERNEL_FAMILIES}, got {self.family!r}")
        if not self.bandwidth > 0.0:
            raise ContractViolationError(f"kernel bandwidth must be > 0, got {self.bandwidth!r}")


@dataclass(frozen=True)
class ErrorMetrics:
    """
    Errors relative to the prior's distance from the reference posterior.

    Names in `absolute` had a prior denominator below RELATIVE_ERROR_FLOOR and
    are reported unscaled.
    """

    rmse: float
    forstner: float
    mmd_matern: float
    mmd_gaussian: float
    mean: tuple[float, ...] = ()
    absolute: frozenset[str] = field(default_factory=frozenset)

    def as_row(self) -> dict[str, float]:
        return {
            "rmse": self.rmse,
            "forstner": self.forstner,
            "mmd_matern15": self.mmd_matern,
            "mmd_gaussian": self.mmd_gaussian,
        }
