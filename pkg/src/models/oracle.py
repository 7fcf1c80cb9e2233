"""Models for the box-constrained quadratic oracle and the tracking bounds."""

from typing_extensions import Self

import numpy as np
from pydantic import Field, model_validator

from src.models.base import ValueModel
from src.models.control import VarLimits
from src.validators.custom_types import FloatVector


class QpInstance(ValueModel):
    """
    minimize ½ (Xq + vbar − mu)ᵀ B (Xq + vbar − mu) over the box.

    The gradient of this objective in q is Xq + vbar − mu.
    """

    X: np.ndarray = Field(..., description="Reactance matrix")
    vbar: FloatVector
    mu: FloatVector
    limits: VarLimits

    @model_validator(mode="after")
    def validate_dimensions(self) -> Self:
        """All pieces must describe the same N."""
        n = self.vbar.shape[0]
        if self.X.shape != (n, n):
            raise ValueError(f"X has shape {self.X.shape}, expected ({n}, {n})")
        if self.mu.shape[0] != n or self.limits.n != n:
            raise ValueError("mu, limits and vbar must have the same length")
        return self

    @property
    def n(self) -> int:
        """Number of variables."""
        return int(self.vbar.shape[0])


class BoundParams(ValueModel):
    """
    Inputs of the tracking-error bound.

    beta_prime None selects the closed-form default.
    """

    c_min: float = Field(..., gt=0)
    m_lip: float = Field(..., gt=0)
    epsilon: float = Field(..., gt=0)
    b2: float = Field(..., ge=0, description="Optimizer drift bound (per-unit²)")
    beta_prime: float | None = Field(default=None, gt=0)

    @model_validator(mode="after")
    def validate_order(self) -> Self:
        """C cannot exceed M."""
        if self.c_min > self.m_lip * (1 + 1e-12):
            raise ValueError(f"C={self.c_min} exceeds M={self.m_lip}")
        return self


class B2Estimate(ValueModel):
    """Empirical optimizer drift, max and mean of ‖q*_{k+1} − q*_k‖²_{D⁻¹}."""

    max_drift: float = Field(default=0.0, ge=0)
    mean_drift: float = Field(default=0.0, ge=0)
    samples: int = Field(default=0, ge=0)
