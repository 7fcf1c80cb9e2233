"""
Service layer for the numerical work.

One module per concern: network matrices and voltages, the gradient
projection controller, nominal-voltage dynamics, update schedules, the
box-QP oracle with tracking bounds, the closed-loop harness, trace
analysis and figures. Services raise their own exception hierarchies.
"""

from src.services.harness_service import (
    EnsembleError,
    HarnessError,
    HarnessService,
    PreparedRun,
    StabilityError,
)

__all__ = [
    "HarnessService",
    "PreparedRun",
    "HarnessError",
    "StabilityError",
    "EnsembleError",
]
