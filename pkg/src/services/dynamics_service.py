"""
Dynamics service: AR(1) nominal-voltage trajectories and VAR limit
trajectories.

Gaussian draws are counter-addressed: the innovation of step k is read
from a Philox stream keyed on the seed with k in the counter, so any step
of any realization can be regenerated on its own, in any thread.
"""

import numpy as np
import structlog
from numpy.typing import NDArray
from scipy import linalg

from src.models.control import VarLimits
from src.models.dynamics import Ar1Params, DynamicsSpec, LimitsMode, LimitsProfile, LimitsSpec
from src.models.network import TreeLayout
from src.services.network_service import check_length
from src.validators.custom_types import broadcast_vector

logger = structlog.get_logger(__name__)

RAMP_TOP = 1.025
RAMP_SPAN = 0.05


class DynamicsError(Exception):
    """Base exception for environment generation errors."""

    pass


class StationarityError(DynamicsError):
    """Raised when the AR(1) process has no stationary distribution."""

    pass


# =============================================================================
# Gaussian innovations
# =============================================================================


def standard_normal(seed: int, step: int, n: int) -> NDArray[np.float64]:
    """
    n standard normal draws addressed by (seed, step).

    Entry j is the draw of bus j+1 at that step; the result does not depend
    on which draws were made before.
    """
    bit_generator = np.random.Philox(key=seed, counter=step << 128)
    return np.random.Generator(bit_generator).standard_normal(n)


def innovation(p: Ar1Params, step: int) -> NDArray[np.float64]:
    """Innovation η_step with independent N(0, σ²) entries."""
    if p.sigma2 == 0.0:
        return np.zeros(p.n)
    return np.sqrt(p.sigma2) * standard_normal(p.seed, step, p.n)


# =============================================================================
# AR(1) process
# =============================================================================


def check_stationary(p: Ar1Params) -> None:
    """
    Raises:
        StationarityError: If |α| ≥ 1 or the transition's spectral radius is ≥ 1
    """
    if abs(p.alpha) >= 1.0:
        raise StationarityError(f"Forgetting factor {p.alpha} has |alpha| >= 1")
    if p.transition is not None:
        radius = float(np.max(np.abs(linalg.eigvals(p.transition))))
        if radius >= 1.0:
            raise StationarityError(f"Transition matrix has spectral radius {radius:.6g} >= 1")


def ar1_step(vbar: NDArray[np.float64], p: Ar1Params, rng: int) -> NDArray[np.float64]:
    """
    Advance the nominal voltage one step: A v̄ + c̄ + η.

    Args:
        vbar: Current nominal voltage
        p: Process parameters
        rng: Index of the step being produced; selects the innovation

    Returns:
        Next nominal voltage
    """
    vbar = check_length("vbar", vbar, p.n)
    carried = p.transition @ vbar if p.transition is not None else p.alpha * vbar
    return carried + p.cbar + innovation(p, rng)


def stationary_stats(p: Ar1Params) -> tuple[NDArray[np.float64], float]:
    """
    Stationary mean and per-bus variance.

    For A = αI: mean c̄/(1−α), variance σ²/(1−α²). For a general transition,
    mean (I−A)⁻¹c̄ and the average diagonal of the stationary covariance.

    Raises:
        StationarityError: If the process is not stationary
    """
    check_stationary(p)
    if p.transition is None:
        return p.cbar / (1.0 - p.alpha), p.sigma2 / (1.0 - p.alpha**2)
    mean = linalg.solve(np.eye(p.n) - p.transition, p.cbar)
    return mean, float(np.mean(np.diag(stationary_covariance(p))))


def stationary_covariance(p: Ar1Params) -> NDArray[np.float64]:
    """
    Stationary covariance Σ solving Σ = AΣAᵀ + σ²I.

    Raises:
        StationarityError: If the process is not stationary
    """
    check_stationary(p)
    if p.transition is None:
        return np.eye(p.n) * (p.sigma2 / (1.0 - p.alpha**2))
    return linalg.solve_discrete_lyapunov(p.transition, p.sigma2 * np.eye(p.n))


def initial_vbar(p: Ar1Params) -> NDArray[np.float64]:
    """Draw v̄₀ from the stationary distribution (the mean when σ² = 0)."""
    mean, variance = stationary_stats(p)
    if p.sigma2 == 0.0:
        return mean.copy()
    z0 = standard_normal(p.seed, 0, p.n)
    if p.transition is None:
        return mean + np.sqrt(variance) * z0
    chol = linalg.cholesky(stationary_covariance(p), lower=True)
    return mean + chol @ z0


def ar1_trajectory(p: Ar1Params, horizon: int) -> NDArray[np.float64]:
    """
    Nominal voltages for steps 0..horizon−1 as a horizon×N array.

    Args:
        p: Process parameters
        horizon: Number of steps

    Returns:
        Trajectory starting from a stationary draw
    """
    out = np.empty((horizon, p.n))
    out[0] = initial_vbar(p)
    for k in range(1, horizon):
        out[k] = ar1_step(out[k - 1], p, k)
    return out


def expected_drift_bound(p: Ar1Params, d: NDArray[np.float64]) -> float:
    """
    Stationary E‖v̄_{k+1} − v̄_k‖²_D, the constant B₁.

    Equals 2σ²Tr(D)/(1+α) for A = αI; in general
    Tr(D((A−I)Σ(A−I)ᵀ + σ²I)).
    """
    d = check_length("d", d, p.n)
    check_stationary(p)
    if p.transition is None:
        return 2.0 * p.sigma2 * float(np.sum(d)) / (1.0 + p.alpha)
    shift = p.transition - np.eye(p.n)
    cov = shift @ stationary_covariance(p) @ shift.T + p.sigma2 * np.eye(p.n)
    return float(np.sum(d * np.diag(cov)))


# =============================================================================
# Mean profiles
# =============================================================================


def feeder_ramp_profile(n: int) -> NDArray[np.float64]:
    """
    Linear ramp from 1.025 at bus 1 down to 0.975 at bus n.

    A single bus sits at the top of the ramp.
    """
    if n < 1:
        raise ValueError(f"Need at least one bus, got {n}")
    if n == 1:
        return np.array([RAMP_TOP])
    return RAMP_TOP - RAMP_SPAN * np.arange(n) / (n - 1)


def depth_ramp_profile(depths: NDArray[np.int64]) -> NDArray[np.float64]:
    """
    Ramp over hop distance from the root: 1.025 at depth 1, 0.975 at the
    deepest bus. On a chain this is feeder_ramp_profile.
    """
    depths = np.asarray(depths)
    deepest = int(depths.max())
    if deepest <= 1:
        return np.full(depths.shape, RAMP_TOP)
    return RAMP_TOP - RAMP_SPAN * (depths - 1) / (deepest - 1)


def resolve_mean_profile(spec: DynamicsSpec, layout: TreeLayout) -> NDArray[np.float64]:
    """Stationary mean vector from a dynamics block."""
    if spec.mean_profile == "feeder_ramp":
        return depth_ramp_profile(layout.depth[1:])
    if spec.mean_profile == "flat":
        return np.ones(layout.n)
    return check_length("mean_profile", np.asarray(spec.mean_profile, dtype=np.float64), layout.n)


def build_ar1_params(spec: DynamicsSpec, layout: TreeLayout, seed: int | None = None) -> Ar1Params:
    """
    Resolve a dynamics block into AR(1) parameters.

    The drift is chosen so the stationary mean equals the requested
    profile: c̄ = (I − A)·mean.

    Args:
        spec: Dynamics block
        layout: Tree layout (bus depths for the feeder ramp)
        seed: Seed replacing spec.seed, e.g. a per-realization seed

    Raises:
        StationarityError: If the transition matrix is not stable
    """
    mean = resolve_mean_profile(spec, layout)
    transition = None
    if spec.transition is not None:
        transition = np.asarray(spec.transition, dtype=np.float64)
        cbar = (np.eye(layout.n) - transition) @ mean
    else:
        cbar = (1.0 - spec.alpha) * mean

    params = Ar1Params(
        alpha=spec.alpha,
        sigma2=spec.innovation_variance,
        cbar=cbar,
        seed=spec.seed if seed is None else seed,
        transition=transition,
    )
    check_stationary(params)
    return params


# =============================================================================
# VAR limits
# =============================================================================


def build_limits_profile(spec: LimitsSpec, n: int) -> LimitsProfile:
    """Resolve a limits block into a LimitsProfile."""
    base = VarLimits(lower=broadcast_vector(spec.lower, n), upper=broadcast_vector(spec.upper, n))
    return LimitsProfile(
        mode=spec.mode,
        base=base,
        scale_series=np.asarray(spec.scale, dtype=np.float64) if spec.scale else None,
    )


def limits_at(profile: LimitsProfile, k: int) -> VarLimits:
    """
    VAR box at step k.

    Scaled mode multiplies both bounds by scale[k mod len(scale)].
    """
    if profile.mode == LimitsMode.STATIC or profile.scale_series is None:
        return profile.base
    factor = float(profile.scale_series[k % profile.scale_series.shape[0]])
    return VarLimits(lower=profile.base.lower * factor, upper=profile.base.upper * factor)
