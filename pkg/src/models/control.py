"""
Controller models.

ControllerSpec is the scenario block as written by users; ControllerConfig
is the resolved numeric configuration that the gradient-projection step
consumes.
"""

from enum import Enum
from typing import Literal

from typing_extensions import Self

import numpy as np
from pydantic import Field, field_validator, model_validator

from src.models.base import SpecModel, ValueModel
from src.validators.custom_types import FloatVector, validate_unit_interval


class ScalingMode(str, Enum):
    """Choice of the diagonal scaling matrix D."""

    NEWTON_DIAG = "newton_diag"  # D = diag(X)^-1
    IDENTITY = "identity"


class StepSizeRule(str, Enum):
    """Step-size values resolved from the network's eigen-extremes."""

    AUTO_SYNC = "auto_sync"  # safety * 2/M
    AUTO_DYNAMIC = "auto_dynamic"  # safety * 2/(C+M)
    AUTO_CLASSICAL = "auto_classical"  # 1/(M(1+K+NK)), exact


class ControllerSpec(SpecModel):
    """Controller block of a scenario file."""

    epsilon: float | StepSizeRule = Field(
        default=StepSizeRule.AUTO_SYNC,
        description="Step-size, either a positive number or an auto rule",
    )
    scaling: ScalingMode = Field(default=ScalingMode.NEWTON_DIAG)
    mu: Literal["flat"] | list[float] = Field(
        default="flat", description="Desired voltage profile"
    )
    safety: float | None = Field(
        default=None,
        description="Fraction of the bound used by auto rules (overrides the setting)",
    )

    @field_validator("epsilon")
    @classmethod
    def validate_epsilon(cls, v: float | StepSizeRule) -> float | StepSizeRule:
        """Numeric step-sizes must be positive and finite."""
        if isinstance(v, float) and not (np.isfinite(v) and v > 0):
            raise ValueError(f"epsilon must be positive, got {v}")
        return v

    @field_validator("safety")
    @classmethod
    def validate_safety(cls, v: float | None) -> float | None:
        """Safety fraction lies in (0, 1]."""
        if v is not None:
            validate_unit_interval(v)
        return v


class VarLimits(ValueModel):
    """Per-bus reactive power box [lower, upper] (per-unit)."""

    lower: FloatVector
    upper: FloatVector

    @model_validator(mode="after")
    def validate_box(self) -> Self:
        """Ensure both bounds have the same length and describe a nonempty box."""
        if self.lower.shape != self.upper.shape:
            raise ValueError(
                f"lower has {self.lower.shape[0]} entries, upper has {self.upper.shape[0]}"
            )
        bad = np.flatnonzero(self.lower > self.upper)
        if bad.size:
            raise ValueError(f"Empty box at buses {(bad + 1).tolist()}")
        return self

    @property
    def n(self) -> int:
        """Number of buses."""
        return int(self.lower.shape[0])

    def contains(self, q: np.ndarray) -> bool:
        """Check that q lies inside the box."""
        return bool(np.all(q >= self.lower) and np.all(q <= self.upper))


class ControllerConfig(ValueModel):
    """Resolved controller parameters."""

    epsilon: float = Field(..., gt=0, description="Step-size")
    scaling: ScalingMode = Field(default=ScalingMode.NEWTON_DIAG)
    d: FloatVector = Field(..., description="Diagonal of the scaling matrix D")
    mu: FloatVector = Field(..., description="Desired voltage profile")

    @model_validator(mode="after")
    def validate_lengths(self) -> Self:
        """Ensure d and mu agree and d is positive."""
        if self.d.shape != self.mu.shape:
            raise ValueError(f"d has {self.d.shape[0]} entries, mu has {self.mu.shape[0]}")
        if np.any(self.d <= 0):
            raise ValueError("Scaling diagonal must be positive")
        return self

    @property
    def n(self) -> int:
        """Number of buses."""
        return int(self.d.shape[0])
