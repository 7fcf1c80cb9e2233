"""
Update schedule models.

A Schedule stores, for each step k, the set of buses that update at k
as a boolean horizon×N matrix.
"""

from enum import Enum

from typing_extensions import Self

import numpy as np
from pydantic import Field, model_validator

from src.models.base import SpecModel, ValueModel
from src.models.dynamics import SEED_MAX


class ScheduleMode(str, Enum):
    """Schedule generators."""

    SYNC = "sync"
    DUTY_CYCLE = "duty_cycle"
    ADVERSARIAL = "adversarial"
    FILE = "file"
    NONE = "none"  # no bus ever updates (no-control baseline)


class ScheduleSpec(SpecModel):
    """Schedule block of a scenario file."""

    mode: ScheduleMode = Field(default=ScheduleMode.SYNC)
    K: int = Field(default=1, ge=1, description="Declared update-delay bound")
    eta: float = Field(default=1.0, gt=0, le=1, description="Duty cycle")
    seed: int = Field(default=0, ge=0, le=SEED_MAX, description="PRNG seed")
    path: str | None = Field(default=None, description="Schedule file for file mode")

    @model_validator(mode="after")
    def validate_mode(self) -> Self:
        """Mode-specific requirements."""
        if self.mode == ScheduleMode.DUTY_CYCLE and self.K % 2:
            raise ValueError(f"duty_cycle needs an even K, got {self.K}")
        if self.mode == ScheduleMode.FILE and not self.path:
            raise ValueError("file mode requires 'path'")
        return self


class Schedule(ValueModel):
    """Per-step activation sets."""

    active: np.ndarray = Field(..., description="Boolean horizon×N activation matrix")
    K: int = Field(..., ge=1, description="Declared delay bound")
    eta: float | None = Field(default=None, description="Duty cycle, when generated by one")
    mode: ScheduleMode

    @model_validator(mode="after")
    def validate_active(self) -> Self:
        """Activation matrix must be two-dimensional and boolean."""
        if self.active.ndim != 2 or self.active.dtype != np.bool_:
            raise ValueError("active must be a boolean horizon×N matrix")
        return self

    @property
    def horizon(self) -> int:
        """Number of steps."""
        return int(self.active.shape[0])

    @property
    def n(self) -> int:
        """Number of buses."""
        return int(self.active.shape[1])

    def active_at(self, k: int) -> np.ndarray:
        """Bus mask for step k."""
        return self.active[k]
