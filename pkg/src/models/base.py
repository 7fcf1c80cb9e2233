"""
Base model classes for the simulator's pydantic domain models.

Provides foundational classes that handle:
- numpy vector fields (via FloatVector)
- JSON-compatible dumps for manifests and sidecars
- Immutable value objects shared across ensemble workers
"""

from typing import Any

from pydantic import BaseModel, ConfigDict


class SpecModel(BaseModel):
    """
    Base model for user-facing scenario blocks.

    Unknown keys are rejected so that a typo in a scenario file surfaces
    as a schema error instead of being silently ignored.

    Usage:
        class ScheduleSpec(SpecModel):
            mode: ScheduleMode
            K: int
    """

    model_config = ConfigDict(
        # Allow population by field name or alias
        populate_by_name=True,
        # Use enum values for serialization
        use_enum_values=False,
        # Scenario blocks are value objects
        frozen=True,
        extra="forbid",
        str_strip_whitespace=True,
    )

    def to_json_dict(self, exclude_none: bool = False) -> dict[str, Any]:
        """
        Convert model to a JSON-serializable dictionary.

        Vectors are converted to lists and enums to their values.

        Args:
            exclude_none: Whether to exclude None values

        Returns:
            JSON-serializable dictionary
        """
        return self.model_dump(exclude_none=exclude_none, by_alias=True, mode="json")


class ValueModel(BaseModel):
    """
    Base model for computed, immutable numerical objects.

    Allows numpy arrays and scipy sparse matrices as field types.
    Instances are shared read-only across ensemble threads.
    """

    model_config = ConfigDict(
        frozen=True,
        arbitrary_types_allowed=True,
        extra="forbid",
    )

    def to_json_dict(self, exclude_none: bool = False) -> dict[str, Any]:
        """Convert model to a JSON-serializable dictionary."""
        return self.model_dump(exclude_none=exclude_none, mode="json")
