"""
Custom Pydantic types and validators for numerical fields.

Provides a FloatVector type that lets pydantic models carry numpy arrays:
lists or arrays go in, contiguous float64 arrays come out, and JSON
serialization turns them back into plain lists.
"""

import math
from typing import Annotated, Any

import numpy as np
from numpy.typing import NDArray
from pydantic import GetCoreSchemaHandler, GetJsonSchemaHandler
from pydantic.json_schema import JsonSchemaValue
from pydantic_core import CoreSchema, PydanticCustomError, core_schema


class _FloatVectorAnnotation:
    """
    Pydantic v2 adapter for one-dimensional float64 numpy arrays.

    Usage:
        class Limits(BaseModel):
            lower: FloatVector
    """

    @classmethod
    def __get_pydantic_core_schema__(
        cls,
        _source_type: Any,
        _handler: GetCoreSchemaHandler,
    ) -> CoreSchema:
        """Define how Pydantic should validate this type."""
        return core_schema.no_info_plain_validator_function(
            cls.validate,
            serialization=core_schema.plain_serializer_function_ser_schema(
                cls.serialize,
                info_arg=False,
                return_schema=core_schema.list_schema(core_schema.float_schema()),
            ),
        )

    @classmethod
    def __get_pydantic_json_schema__(
        cls,
        _core_schema: CoreSchema,
        handler: GetJsonSchemaHandler,
    ) -> JsonSchemaValue:
        """Define JSON schema representation."""
        return {
            "type": "array",
            "items": {"type": "number"},
            "description": "Vector of finite floats",
        }

    @classmethod
    def validate(cls, value: Any) -> NDArray[np.float64]:
        """Validate and convert value to a finite float64 vector."""
        if isinstance(value, (str, bytes)):
            raise PydanticCustomError(
                "vector_type",
                "Expected a list of numbers, got {type}",
                {"type": type(value).__name__},
            )
        try:
            array = np.array(value, dtype=np.float64)
        except (TypeError, ValueError) as e:
            raise PydanticCustomError(
                "vector_type",
                "Expected a list of numbers, got {type}",
                {"type": type(value).__name__},
            ) from e

        if array.ndim != 1:
            raise PydanticCustomError(
                "vector_shape",
                "Expected a one-dimensional vector, got shape {shape}",
                {"shape": str(array.shape)},
            )
        if not np.all(np.isfinite(array)):
            raise PydanticCustomError("vector_finite", "Vector entries must be finite")

        array.setflags(write=False)
        return array

    @classmethod
    def serialize(cls, value: NDArray[np.float64]) -> list[float]:
        """Serialize vector to a list of floats."""
        return [float(v) for v in value]


FloatVector = Annotated[NDArray[np.float64], _FloatVectorAnnotation]


def validate_unit_interval(value: float, *, open_left: bool = True) -> float:
    """
    Validate that a value lies in (0, 1] (or [0, 1] when open_left is False).

    Used for duty cycles and limit scale factors.
    """
    if not math.isfinite(value):
        raise ValueError("Value must be finite")
    if value > 1.0:
        raise ValueError(f"Value {value} exceeds 1")
    if open_left and value <= 0.0:
        raise ValueError(f"Value {value} must be positive")
    if not open_left and value < 0.0:
        raise ValueError(f"Value {value} must be non-negative")
    return value


def validate_forgetting_factor(value: float) -> float:
    """Validate an AR(1) forgetting factor: |alpha| < 1."""
    if not math.isfinite(value) or abs(value) >= 1.0:
        raise ValueError(f"Forgetting factor must satisfy |alpha| < 1, got {value}")
    return value


def broadcast_vector(
    value: float | list[float] | NDArray[np.float64], n: int
) -> NDArray[np.float64]:
    """
    Expand a scalar to a length-n vector or check a vector's length.

    Args:
        value: scalar or vector
        n: required length

    Returns:
        Read-only float64 vector of length n
    """
    if np.isscalar(value):
        out = np.full(n, float(value))  # type: ignore[arg-type]
    else:
        out = np.array(value, dtype=np.float64)
        if out.shape != (n,):
            raise ValueError(f"Expected {n} entries, got shape {out.shape}")
    out.setflags(write=False)
    return out
