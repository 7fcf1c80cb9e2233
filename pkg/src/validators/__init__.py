"""
Custom validators and types for numerical pydantic models.

This module provides the FloatVector type and scalar validators shared
by the domain models.
"""

from src.validators.custom_types import (
    FloatVector,
    broadcast_vector,
    validate_forgetting_factor,
    validate_unit_interval,
)

__all__ = [
    "FloatVector",
    "broadcast_vector",
    "validate_forgetting_factor",
    "validate_unit_interval",
]
