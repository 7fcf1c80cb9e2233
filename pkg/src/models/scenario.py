"""
Scenario model.

A scenario bundles the topology, controller, dynamics and schedule blocks
with run-level settings. It is the unit that the CLI validates, hashes
and runs.
"""

from enum import Enum

from typing_extensions import Self

from pydantic import Field, model_validator

from src.models.base import SpecModel
from src.models.control import ControllerSpec
from src.models.dynamics import SEED_MAX, DynamicsSpec
from src.models.network import RadialNetwork
from src.models.schedule import ScheduleSpec


class PhysicsMode(str, Enum):
    """How measured voltages are produced."""

    LINEAR = "linear"  # v = Xq + vbar
    SWEEP = "sweep"  # nonlinear backward/forward sweep


class StabilityMode(str, Enum):
    """What to do with step-sizes outside the stable range."""

    STRICT = "strict"  # refuse to run
    PERMISSIVE = "permissive"  # run and record divergence


class Scenario(SpecModel):
    """A complete, runnable simulation description."""

    name: str = Field(default="scenario", min_length=1, max_length=100)
    description: str | None = Field(default=None, max_length=2000)
    topology: RadialNetwork
    controller: ControllerSpec = Field(default_factory=ControllerSpec)
    dynamics: DynamicsSpec
    schedule: ScheduleSpec = Field(default_factory=ScheduleSpec)
    horizon: int = Field(..., ge=1, description="Number of simulated steps")
    realizations: int = Field(default=1, ge=1, description="Ensemble size R")
    master_seed: int = Field(default=0, ge=0, le=SEED_MAX)
    physics: PhysicsMode = Field(default=PhysicsMode.LINEAR)
    mode: StabilityMode = Field(default=StabilityMode.STRICT)
    initial_q: float | list[float] = Field(
        default=0.0, description="Initial VAR injections, projected onto the first box"
    )
    beta_prime: float | None = Field(
        default=None, gt=0, description="Free scalar of the tracking bound (default: closed form)"
    )

    @model_validator(mode="after")
    def validate_vector_lengths(self) -> Self:
        """Every per-bus list must have one entry per non-root bus."""
        n = self.topology.n
        checks: dict[str, object] = {
            "controller.mu": self.controller.mu,
            "dynamics.mean_profile": self.dynamics.mean_profile,
            "dynamics.limits.lower": self.dynamics.limits.lower,
            "dynamics.limits.upper": self.dynamics.limits.upper,
            "initial_q": self.initial_q,
        }
        for path, value in checks.items():
            if isinstance(value, list) and len(value) != n:
                raise ValueError(f"{path} has {len(value)} entries, topology has {n} buses")

        lower, upper = self.dynamics.limits.lower, self.dynamics.limits.upper
        if isinstance(lower, list) or isinstance(upper, list):
            lo = lower if isinstance(lower, list) else [lower] * n
            up = upper if isinstance(upper, list) else [upper] * n
            bad = [j + 1 for j in range(n) if lo[j] > up[j]]
            if bad:
                raise ValueError(f"dynamics.limits: lower exceeds upper at buses {bad}")

        transition = self.dynamics.transition
        if transition is not None:
            if len(transition) != n or any(len(row) != n for row in transition):
                raise ValueError(f"dynamics.transition must be {n}×{n}")
        return self

    @property
    def n(self) -> int:
        """Number of controllable buses."""
        return self.topology.n
