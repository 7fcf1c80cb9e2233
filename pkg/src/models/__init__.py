"""
Pydantic models for the volt/VAR control simulator.

This module exports all domain models used throughout the application:
- Network: radial topology, tree layout and derived matrices
- Control: controller block, VAR box and resolved configuration
- Dynamics: AR(1) nominal-voltage process and time-varying limits
- Schedule: asynchronous update schedules
- Oracle: box-QP instances and tracking-bound parameters
- Scenario and results: run description, traces, reports and manifests
"""

from src.models.base import SpecModel, ValueModel
from src.models.control import (
    ControllerConfig,
    ControllerSpec,
    ScalingMode,
    StepSizeRule,
    VarLimits,
)
from src.models.dynamics import Ar1Params, DynamicsSpec, LimitsMode, LimitsProfile, LimitsSpec
from src.models.network import (
    LineSpec,
    NetworkMatrices,
    PerUnitBase,
    RadialNetwork,
    TreeLayout,
)
from src.models.oracle import B2Estimate, BoundParams, QpInstance
from src.models.results import (
    CSV_COLUMNS,
    SUMMARY_COLUMNS,
    TRACE_COLUMNS,
    BoundReport,
    EnsembleResult,
    GridState,
    ResolvedParameters,
    RunManifest,
    SweepRow,
    TrackingRecord,
)
from src.models.scenario import PhysicsMode, Scenario, StabilityMode
from src.models.schedule import Schedule, ScheduleMode, ScheduleSpec

__all__ = [
    # Base
    "SpecModel",
    "ValueModel",
    # Network
    "PerUnitBase",
    "LineSpec",
    "RadialNetwork",
    "TreeLayout",
    "NetworkMatrices",
    # Control
    "ScalingMode",
    "StepSizeRule",
    "ControllerSpec",
    "ControllerConfig",
    "VarLimits",
    # Dynamics
    "DynamicsSpec",
    "LimitsMode",
    "LimitsSpec",
    "LimitsProfile",
    "Ar1Params",
    # Schedule
    "ScheduleMode",
    "ScheduleSpec",
    "Schedule",
    # Oracle
    "QpInstance",
    "BoundParams",
    "B2Estimate",
    # Scenario and results
    "PhysicsMode",
    "StabilityMode",
    "Scenario",
    "GridState",
    "TrackingRecord",
    "EnsembleResult",
    "BoundReport",
    "ResolvedParameters",
    "RunManifest",
    "SweepRow",
    "TRACE_COLUMNS",
    "CSV_COLUMNS",
    "SUMMARY_COLUMNS",
]
