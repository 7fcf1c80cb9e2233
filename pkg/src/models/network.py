"""
Radial network models.

A RadialNetwork is the user-facing topology block of a scenario. TreeLayout
and NetworkMatrices are derived, immutable objects produced by the network
service and shared read-only by every realization of an ensemble.
"""

from typing import Annotated, Any

from typing_extensions import Self

import numpy as np
from numpy.typing import NDArray
from pydantic import Field, model_validator
from scipy import sparse

from src.models.base import SpecModel, ValueModel
from src.models.control import ScalingMode

BusIndex = Annotated[int, Field(ge=0)]


class PerUnitBase(SpecModel):
    """Voltage and power base used to convert ohms and kVAr into per-unit."""

    kv: float = Field(default=4.16, gt=0, description="Line-to-line base voltage (kV)")
    mva: float = Field(default=1.0, gt=0, description="Three-phase base power (MVA)")

    @property
    def z_base(self) -> float:
        """Base impedance in ohms."""
        return self.kv**2 / self.mva

    def ohms_to_pu(self, ohms: float) -> float:
        """Convert an impedance in ohms to per-unit."""
        return ohms / self.z_base

    def kvar_to_pu(self, kvar: float) -> float:
        """Convert a reactive power in kVAr to per-unit."""
        return kvar / (self.mva * 1000.0)


class LineSpec(SpecModel):
    """A line segment (i, j) with per-unit impedance."""

    from_bus: BusIndex = Field(..., alias="from", description="Upstream bus")
    to_bus: BusIndex = Field(..., alias="to", description="Downstream bus")
    r: float = Field(..., ge=0, description="Per-unit resistance")
    x: float = Field(..., gt=0, description="Per-unit reactance")

    @model_validator(mode="after")
    def validate_endpoints(self) -> Self:
        """Reject self-loops."""
        if self.from_bus == self.to_bus:
            raise ValueError(f"Line connects bus {self.from_bus} to itself")
        return self


class RadialNetwork(SpecModel):
    """
    Tree-topology distribution network rooted at bus 0.

    Bus 0 is the substation with fixed voltage v0. Buses are numbered
    0..N and there must be exactly one line feeding each non-root bus.
    Tree structure (no cycles, all buses reachable) is checked by the
    network service, which can name the offending line.
    """

    buses: int = Field(..., ge=2, description="Number of buses including the root")
    lines: list[LineSpec] = Field(..., min_length=1, description="Line segments")
    v0: float = Field(default=1.0, gt=0, description="Root voltage (per-unit)")
    base: PerUnitBase | None = Field(
        default=None, description="Per-unit base the impedances were converted with"
    )

    @model_validator(mode="after")
    def validate_bus_indices(self) -> Self:
        """Ensure all line endpoints name existing buses."""
        for idx, line in enumerate(self.lines):
            for bus in (line.from_bus, line.to_bus):
                if bus >= self.buses:
                    raise ValueError(
                        f"Line {idx} references bus {bus}, network has {self.buses} buses"
                    )
        return self

    @property
    def n(self) -> int:
        """Number of controllable (non-root) buses."""
        return self.buses - 1


class TreeLayout(ValueModel):
    """
    Rooted view of a radial network.

    Reduced indices 0..N-1 stand for buses 1..N; the line feeding bus j
    shares its reduced index j-1, which fixes the column order of the
    incidence matrix.
    """

    parent: np.ndarray = Field(..., description="Parent bus per bus, -1 for the root")
    order: np.ndarray = Field(..., description="Non-root buses in BFS order")
    depth: np.ndarray = Field(..., description="Hop distance from the root per bus")
    line_of_bus: np.ndarray = Field(
        ..., description="Index into RadialNetwork.lines of the line feeding each bus"
    )
    r: np.ndarray = Field(..., description="Resistance of the line feeding bus j+1")
    x: np.ndarray = Field(..., description="Reactance of the line feeding bus j+1")
    path: Any = Field(
        ..., description="Sparse root-path matrix, path[i, j] = 1 if line j is upstream of bus i+1"
    )

    @property
    def n(self) -> int:
        """Number of non-root buses."""
        return int(self.x.shape[0])

    @property
    def parent_reduced(self) -> NDArray[np.int64]:
        """Reduced parent index per reduced bus, -1 when the parent is the root."""
        return self.parent[1:] - 1


class NetworkMatrices(ValueModel):
    """
    Matrices of the linearized network model.

    X maps reactive injections to voltages (v = Xq + v̄), B is its inverse,
    d is the diagonal of the scaling matrix D and xtilde = D^½ X D^½.
    c_min and m_lip are the smallest and largest eigenvalues of xtilde.
    """

    incidence: sparse.csc_matrix = Field(..., description="Reduced incidence matrix M")
    X: np.ndarray = Field(..., description="Reactance matrix")
    B: np.ndarray = Field(..., description="Inverse reactance matrix")
    R: np.ndarray = Field(..., description="Resistance matrix for real injections")
    d: np.ndarray = Field(..., description="Diagonal of the scaling matrix D")
    xtilde: np.ndarray = Field(..., description="Scaled reactance matrix")
    c_min: float = Field(..., gt=0, description="Smallest eigenvalue of xtilde (C)")
    m_lip: float = Field(..., gt=0, description="Largest eigenvalue of xtilde (M)")
    scaling: ScalingMode = Field(..., description="How D was chosen")
    v0: float = Field(default=1.0, gt=0, description="Root voltage")
    layout: TreeLayout

    @property
    def n(self) -> int:
        """Number of controllable buses."""
        return int(self.d.shape[0])

    @property
    def xtilde_extremes(self) -> tuple[float, float]:
        """(C, M) pair."""
        return self.c_min, self.m_lip

    @property
    def condition_number(self) -> float:
        """Condition number of xtilde."""
        return self.m_lip / self.c_min
