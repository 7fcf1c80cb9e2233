"""
Models for the time-varying environment: AR(1) nominal voltages and
reactive power limit trajectories.
"""

from enum import Enum
from typing import Literal

from typing_extensions import Self

import numpy as np
from pydantic import Field, field_validator, model_validator

from src.models.base import SpecModel, ValueModel
from src.models.control import VarLimits
from src.validators.custom_types import (
    FloatVector,
    validate_forgetting_factor,
    validate_unit_interval,
)

SEED_MAX = 2**64 - 1


class LimitsMode(str, Enum):
    """How the VAR box evolves over time."""

    STATIC = "static"
    SCALED = "scaled"  # base box times a per-step multiplier


class LimitsSpec(SpecModel):
    """Limits block of a scenario's dynamics section."""

    mode: LimitsMode = Field(default=LimitsMode.STATIC)
    lower: float | list[float] = Field(..., description="Lower VAR limit per bus (per-unit)")
    upper: float | list[float] = Field(..., description="Upper VAR limit per bus (per-unit)")
    scale: list[float] | None = Field(
        default=None,
        description="Per-step multipliers in (0, 1], repeated cyclically over the horizon",
    )

    @field_validator("scale")
    @classmethod
    def validate_scale(cls, v: list[float] | None) -> list[float] | None:
        """Every multiplier lies in (0, 1]."""
        if v is not None:
            if not v:
                raise ValueError("scale series must not be empty")
            for value in v:
                validate_unit_interval(value)
        return v

    @model_validator(mode="after")
    def validate_mode(self) -> Self:
        """Scaled mode needs a scale series; scalar bounds must be ordered."""
        if self.mode == LimitsMode.SCALED and self.scale is None:
            raise ValueError("scaled limits require a 'scale' series")
        if self.mode == LimitsMode.STATIC and self.scale is not None:
            raise ValueError("'scale' is only meaningful in scaled mode")
        if isinstance(self.lower, float) and isinstance(self.upper, float):
            if self.lower > self.upper:
                raise ValueError(f"lower {self.lower} exceeds upper {self.upper}")
        return self


class DynamicsSpec(SpecModel):
    """
    Dynamics block of a scenario file.

    The innovation variance can be given as sigma2, as a standard deviation
    sigma, or through the stationary variance it should produce
    (sigma2 = stationary_variance * (1 - alpha^2)). At most one may be set;
    none means a noiseless, static environment.
    """

    alpha: float = Field(default=0.0, description="Forgetting factor, |alpha| < 1")
    sigma2: float | None = Field(default=None, ge=0, description="Innovation variance")
    sigma: float | None = Field(default=None, ge=0, description="Innovation std-dev")
    stationary_variance: float | None = Field(
        default=None, ge=0, description="Target stationary variance"
    )
    mean_profile: Literal["feeder_ramp", "flat"] | list[float] = Field(
        default="feeder_ramp", description="Stationary mean of the nominal voltage"
    )
    transition: list[list[float]] | None = Field(
        default=None, description="General N×N AR(1) transition matrix (overrides alpha)"
    )
    seed: int = Field(default=0, ge=0, le=SEED_MAX, description="PRNG seed")
    limits: LimitsSpec

    @field_validator("alpha")
    @classmethod
    def validate_alpha(cls, v: float) -> float:
        """Stationarity requires |alpha| < 1."""
        return validate_forgetting_factor(v)

    @model_validator(mode="after")
    def validate_noise(self) -> Self:
        """At most one noise parameterization."""
        given = [
            name
            for name in ("sigma2", "sigma", "stationary_variance")
            if getattr(self, name) is not None
        ]
        if len(given) > 1:
            raise ValueError(f"Give only one of sigma2, sigma, stationary_variance; got {given}")
        return self

    @property
    def innovation_variance(self) -> float:
        """Resolved sigma2 for a scalar transition."""
        if self.sigma2 is not None:
            return self.sigma2
        if self.sigma is not None:
            return self.sigma**2
        if self.stationary_variance is not None:
            return self.stationary_variance * (1.0 - self.alpha**2)
        return 0.0


class Ar1Params(ValueModel):
    """
    Resolved AR(1) parameters: vbar_{k+1} = A vbar_k + cbar + eta_{k+1}.

    A is alpha times identity unless a transition matrix is given.
    """

    alpha: float = Field(default=0.0, description="Forgetting factor")
    sigma2: float = Field(default=0.0, ge=0, description="Innovation variance")
    cbar: FloatVector = Field(..., description="Drift vector")
    seed: int = Field(default=0, ge=0, le=SEED_MAX)
    transition: np.ndarray | None = Field(default=None, description="N×N transition matrix")

    @field_validator("alpha")
    @classmethod
    def validate_alpha(cls, v: float) -> float:
        """Stationarity requires |alpha| < 1."""
        return validate_forgetting_factor(v)

    @model_validator(mode="after")
    def validate_transition(self) -> Self:
        """Transition matrix must be square and match cbar."""
        if self.transition is not None:
            n = self.cbar.shape[0]
            if self.transition.shape != (n, n):
                raise ValueError(
                    f"transition has shape {self.transition.shape}, expected ({n}, {n})"
                )
        return self

    @property
    def n(self) -> int:
        """Number of buses."""
        return int(self.cbar.shape[0])


class LimitsProfile(ValueModel):
    """Resolved VAR limit trajectory."""

    mode: LimitsMode = Field(default=LimitsMode.STATIC)
    base: VarLimits
    scale_series: FloatVector | None = None

    @model_validator(mode="after")
    def validate_series(self) -> Self:
        """Scaled mode needs a series of multipliers in (0, 1]."""
        if self.mode == LimitsMode.SCALED:
            if self.scale_series is None or self.scale_series.size == 0:
                raise ValueError("scaled limits require a scale series")
            if np.any(self.scale_series <= 0) or np.any(self.scale_series > 1):
                raise ValueError("scale multipliers must lie in (0, 1]")
        return self
