"""
Control service: the decentralized gradient-projection controller.

Each bus j updates its own VAR injection from its own voltage measurement:

    q'_j = clamp(q_j − ε d_j (v_j − μ_j), [lower_j, upper_j])

Buses outside the active mask keep their value. This module also holds the
step-size bounds and the spectral checks used to accept or refuse a
step-size, and resolves a scenario's controller block into numbers.
"""

import numpy as np
import structlog
from numpy.typing import NDArray
from scipy import linalg

from src.models.control import ControllerConfig, ControllerSpec, StepSizeRule, VarLimits
from src.models.network import NetworkMatrices
from src.services.network_service import DimensionError, check_length

logger = structlog.get_logger(__name__)


class ControlError(Exception):
    """Base exception for controller errors."""

    pass


class MeasurementError(ControlError):
    """Raised when a voltage measurement is not a finite number."""

    pass


class StepSizeError(ControlError):
    """Raised when a step-size rule cannot be resolved."""

    pass


# =============================================================================
# Gradient projection
# =============================================================================


def project_box(q: NDArray[np.float64], limits: VarLimits) -> NDArray[np.float64]:
    """Euclidean projection onto the VAR box (per-bus clamp)."""
    return np.minimum(np.maximum(q, limits.lower), limits.upper)


def gp_step(
    q: NDArray[np.float64],
    v: NDArray[np.float64],
    cfg: ControllerConfig,
    limits: VarLimits,
    active: NDArray[np.bool_] | None = None,
) -> NDArray[np.float64]:
    """
    One gradient-projection update driven by measured voltages.

    q is first projected onto the current box, which only matters when the
    limits tightened since the previous step.

    Args:
        q: Current VAR injections
        v: Measured voltages
        cfg: Controller configuration
        limits: Current VAR box
        active: Buses updating at this step (all when None)

    Returns:
        Next VAR injections

    Raises:
        DimensionError: If any vector does not have N entries
        MeasurementError: If v contains NaN or infinities
    """
    n = cfg.n
    q = check_length("q", q, n)
    v = check_length("v", v, n)
    if limits.n != n:
        raise DimensionError(f"limits have {limits.n} entries, expected {n}")
    if not np.all(np.isfinite(v)):
        bad = np.flatnonzero(~np.isfinite(v))
        raise MeasurementError(f"Non-finite voltage measurement at buses {(bad + 1).tolist()}")

    q = project_box(q, limits)
    updated = project_box(q - cfg.epsilon * cfg.d * (v - cfg.mu), limits)
    if active is None:
        return updated

    active = np.asarray(active, dtype=bool)
    if active.shape != (n,):
        raise DimensionError(f"active mask has shape {active.shape}, expected ({n},)")
    return np.where(active, updated, q)


def scaled_gp_step(
    y: NDArray[np.float64],
    xtilde: NDArray[np.float64],
    u: NDArray[np.float64],
    lower: NDArray[np.float64],
    upper: NDArray[np.float64],
    epsilon: float,
) -> NDArray[np.float64]:
    """
    Gradient projection in scaled coordinates y = D^{-½} q.

    Minimizes ½ yᵀX̃y + uᵀy over the scaled box [lower, upper] with one step
    y' = clamp(y − ε(X̃y + u)). With u = D^½(v̄ − μ) and the box scaled by
    D^{-½}, D^½ y' equals gp_step on q = D^½ y.
    """
    return np.minimum(np.maximum(y - epsilon * (xtilde @ y + u), lower), upper)


# =============================================================================
# Step-size bounds
# =============================================================================


def sync_step_size_bound(mat: NetworkMatrices) -> float:
    """Largest stable synchronous step-size, 2/M."""
    return 2.0 / mat.m_lip


def dynamic_step_size_bound(mat: NetworkMatrices) -> float:
    """Step-size bound of the dynamic tracking result, 2/(C + M)."""
    return 2.0 / (mat.c_min + mat.m_lip)


def classical_async_step_size_bound(mat: NetworkMatrices, K: int, n: int) -> float:
    """
    Conservative asynchronous step-size, 1/(M(1 + K + NK)).

    Raises:
        ValueError: If K < 1 or n < 1
    """
    if K < 1 or n < 1:
        raise ValueError(f"Need K >= 1 and N >= 1, got K={K}, N={n}")
    return 1.0 / (mat.m_lip * (1 + K + n * K))


def spectral_radius(mat: NetworkMatrices, epsilon: float) -> float:
    """Spectral radius of I − εX̃, computed from its eigenvalues."""
    w = linalg.eigvalsh(np.eye(mat.n) - epsilon * mat.xtilde)
    return float(np.max(np.abs(w)))


def linear_rate(mat: NetworkMatrices, epsilon: float) -> float:
    """Contraction factor max(|1 − εC|, |1 − εM|) of the unconstrained iteration."""
    return max(abs(1.0 - epsilon * mat.c_min), abs(1.0 - epsilon * mat.m_lip))


# =============================================================================
# Resolution of scenario blocks
# =============================================================================


def resolve_mu(spec: ControllerSpec, n: int) -> NDArray[np.float64]:
    """Desired voltage profile as a vector."""
    if spec.mu == "flat":
        return np.ones(n)
    return check_length("mu", np.asarray(spec.mu, dtype=np.float64), n)


def epsilon_rule_name(spec: ControllerSpec) -> str:
    """Name of the step-size rule, "explicit" for a number."""
    return spec.epsilon.value if isinstance(spec.epsilon, StepSizeRule) else "explicit"


def resolve_epsilon(
    spec: ControllerSpec,
    mat: NetworkMatrices,
    K: int,
    safety: float,
) -> float:
    """
    Turn a numeric step-size or an auto rule into a number.

    auto_sync and auto_dynamic take the safety fraction of their bound;
    auto_classical is the classical asynchronous bound itself.
    """
    eps = spec.epsilon
    if isinstance(eps, float):
        return eps
    if eps == StepSizeRule.AUTO_SYNC:
        return safety * sync_step_size_bound(mat)
    if eps == StepSizeRule.AUTO_DYNAMIC:
        return safety * dynamic_step_size_bound(mat)
    if eps == StepSizeRule.AUTO_CLASSICAL:
        return classical_async_step_size_bound(mat, K, mat.n)
    raise StepSizeError(f"Unknown step-size rule {eps!r}")


def resolve_controller(
    spec: ControllerSpec,
    mat: NetworkMatrices,
    K: int = 1,
    default_safety: float = 0.5,
) -> ControllerConfig:
    """
    Build a ControllerConfig from a scenario's controller block.

    Args:
        spec: Controller block
        mat: Network matrices (provide D and the eigen-extremes)
        K: Declared delay bound of the schedule, for auto_classical
        default_safety: Safety fraction when the block does not set one

    Returns:
        Resolved configuration
    """
    if spec.scaling != mat.scaling:
        raise ControlError(
            f"Controller scaling {spec.scaling.value} does not match matrices "
            f"built with {mat.scaling.value}"
        )
    safety = spec.safety if spec.safety is not None else default_safety
    epsilon = resolve_epsilon(spec, mat, K, safety)
    cfg = ControllerConfig(
        epsilon=epsilon,
        scaling=spec.scaling,
        d=mat.d,
        mu=resolve_mu(spec, mat.n),
    )
    logger.debug(
        "controller_resolved", epsilon=epsilon, rule=epsilon_rule_name(spec), safety=safety
    )
    return cfg
