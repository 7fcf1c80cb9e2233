"""
Result models: per-step state, per-episode traces, ensemble statistics,
bound reports and run manifests.
"""

from datetime import datetime, timezone
from typing import Any

import numpy as np
from pydantic import Field

from src.models.base import SpecModel, ValueModel
from src.models.control import VarLimits
from src.models.oracle import B2Estimate
from src.validators.custom_types import FloatVector

# Column order of per-step traces
TRACE_COLUMNS: tuple[str, ...] = (
    "mismatch_l2",
    "objective",
    "tracking_err_weighted",
    "oracle_objective",
    "bound",
    "cum_updates",
)

# Column order of the ensemble CSV
CSV_COLUMNS: tuple[str, ...] = (
    "step",
    *TRACE_COLUMNS,
    "mismatch_std",
    "tracking_std",
)

SUMMARY_COLUMNS: tuple[str, ...] = (
    "param_value",
    "steady_state_mismatch",
    "steady_state_tracking",
    "bound",
    "ratio",
)


def utc_now() -> datetime:
    """Get current UTC datetime."""
    return datetime.now(timezone.utc)


class GridState(ValueModel):
    """Snapshot of the grid at step k, after the environment moved."""

    k: int = Field(..., ge=0)
    q: FloatVector
    vbar: FloatVector
    v: FloatVector
    limits: VarLimits


class TrackingRecord(ValueModel):
    """Per-step metrics of one episode."""

    seed: int
    mismatch_l2: np.ndarray = Field(..., description="‖v_k − mu‖₂")
    objective: np.ndarray = Field(..., description="f_k(q_k)")
    tracking_err_weighted: np.ndarray = Field(..., description="‖q_k − q*_k‖²_{D⁻¹}")
    oracle_objective: np.ndarray = Field(..., description="f_k(q*_k)")
    bound: np.ndarray = Field(..., description="Tracking bound at step k")
    cum_updates: np.ndarray = Field(..., description="Bus updates performed before step k")
    final_q: np.ndarray
    b2: B2Estimate = Field(default_factory=B2Estimate)
    diverged: bool = Field(default=False, description="Non-finite values were produced")

    @property
    def horizon(self) -> int:
        """Number of recorded steps."""
        return int(self.mismatch_l2.shape[0])

    @property
    def initial_err(self) -> float:
        """Tracking error at step 0."""
        return float(self.tracking_err_weighted[0])

    def column(self, name: str) -> np.ndarray:
        """Trace by column name."""
        if name not in TRACE_COLUMNS:
            raise KeyError(name)
        return getattr(self, name)


class EnsembleResult(ValueModel):
    """Per-step mean and standard deviation across realizations."""

    mean: dict[str, np.ndarray]
    std: dict[str, np.ndarray]
    seeds: list[int]
    b2: B2Estimate
    final_q: np.ndarray = Field(..., description="Final q per realization (R×N)")
    diverged: bool = False

    @property
    def horizon(self) -> int:
        """Number of steps."""
        return int(self.mean["mismatch_l2"].shape[0])

    @property
    def realizations(self) -> int:
        """Ensemble size."""
        return len(self.seeds)


class BoundReport(ValueModel):
    """Comparison of the ensemble tracking error with the theoretical bound."""

    empirical: np.ndarray
    bound: np.ndarray
    steady_state_empirical: float
    steady_state_bound: float
    ratio: float = Field(..., description="Steady-state empirical / bound, NaN when bound is 0")
    max_step_ratio: float = Field(..., description="Largest per-step empirical/bound")
    holds: bool = Field(..., description="Empirical error never exceeds the bound")
    rho: float
    theta: float
    b2_max: float
    b2_mean: float
    b1: float
    b2_b1_ratio: float


class ResolvedParameters(SpecModel):
    """Numbers derived from a scenario before it runs."""

    n: int
    c_min: float
    m_lip: float
    epsilon: float
    epsilon_rule: str
    safety: float
    sync_bound: float
    dynamic_bound: float
    classical_bound: float
    spectral_radius: float
    linear_rate: float
    bound_rho: float | None = None
    beta_prime: float | None = None
    stable: bool


class RunManifest(SpecModel):
    """Everything needed to reproduce a run."""

    scenario_path: str
    scenario_hash: str
    overrides: list[str] = Field(default_factory=list)
    resolved: ResolvedParameters
    outputs: dict[str, str] = Field(default_factory=dict)
    master_seed: int
    seeds: list[int]
    workers: int = 1
    wall_clock_s: float = 0.0
    started_at: datetime = Field(default_factory=utc_now)
    version: str = "0.1.0"
    extra: dict[str, Any] = Field(default_factory=dict)


class SweepRow(SpecModel):
    """One grid point of a parameter sweep."""

    param_value: str
    steady_state_mismatch: float = float("nan")
    steady_state_tracking: float = float("nan")
    bound: float = float("nan")
    ratio: float = float("nan")
    error: str | None = None
