"""
Tests for the dynamics service: AR(1) nominal voltages and VAR limit
trajectories.
"""

import numpy as np
import pytest

from src.models.dynamics import Ar1Params, DynamicsSpec, LimitsMode, LimitsProfile, LimitsSpec
from src.models.control import VarLimits
from src.services.dynamics_service import (
    StationarityError,
    ar1_step,
    ar1_trajectory,
    build_ar1_params,
    build_limits_profile,
    check_stationary,
    depth_ramp_profile,
    expected_drift_bound,
    feeder_ramp_profile,
    initial_vbar,
    innovation,
    limits_at,
    resolve_mean_profile,
    standard_normal,
    stationary_covariance,
    stationary_stats,
)
from src.services.network_service import DimensionError, analyze_topology

LIMITS = {"lower": -0.1, "upper": 0.1}


def params(n: int = 4, alpha: float = 0.5, sigma2: float = 1e-4, seed: int = 7) -> Ar1Params:
    """Scalar AR(1) parameters with stationary mean 1."""
    return Ar1Params(alpha=alpha, sigma2=sigma2, cbar=np.full(n, 1.0 - alpha), seed=seed)


# =============================================================================
# Random draws
# =============================================================================


class TestStandardNormal:
    """Tests for counter-addressed Gaussian draws."""

    def test_deterministic(self):
        """Test that the same (seed, step) gives the same draws."""
        np.testing.assert_array_equal(standard_normal(5, 12, 6), standard_normal(5, 12, 6))

    def test_steps_differ(self):
        """Test that neighbouring steps give different draws."""
        assert not np.array_equal(standard_normal(5, 1, 6), standard_normal(5, 2, 6))

    def test_seeds_differ(self):
        """Test that seeds select different streams."""
        assert not np.array_equal(standard_normal(5, 1, 6), standard_normal(6, 1, 6))

    def test_prefix_stable(self):
        """Test that the draw of bus j does not depend on N."""
        np.testing.assert_array_equal(standard_normal(3, 9, 3), standard_normal(3, 9, 8)[:3])

    def test_noiseless_innovation(self):
        """Test that σ² = 0 gives zero innovations."""
        np.testing.assert_array_equal(innovation(params(sigma2=0.0), 4), np.zeros(4))


# =============================================================================
# AR(1) process
# =============================================================================


class TestAr1Process:
    """Tests for AR(1) trajectories."""

    def test_step_formula(self):
        """Test v̄' = αv̄ + c̄ + η."""
        p = params()
        vbar = np.array([1.0, 1.01, 0.99, 1.02])
        expected = 0.5 * vbar + 0.5 + innovation(p, 3)
        np.testing.assert_allclose(ar1_step(vbar, p, 3), expected, rtol=0, atol=1e-15)

    def test_trajectory_regenerates(self):
        """Test that any step can be rebuilt from the previous one."""
        p = params()
        traj = ar1_trajectory(p, 40)
        for k in (1, 17, 39):
            np.testing.assert_array_equal(ar1_step(traj[k - 1], p, k), traj[k])

    def test_initial_draw_from_step_zero(self):
        """Test that the first entry is the stationary draw of step 0."""
        p = params()
        expected = 1.0 + np.sqrt(1e-4 / 0.75) * standard_normal(p.seed, 0, p.n)
        np.testing.assert_allclose(initial_vbar(p), expected, atol=1e-15)

    def test_noiseless_is_constant(self):
        """Test that a noiseless process sits at its mean."""
        traj = ar1_trajectory(params(sigma2=0.0), 25)
        np.testing.assert_allclose(traj, np.ones((25, 4)), atol=1e-14)

    def test_wrong_length(self):
        """Test rejection of a v̄ of the wrong size."""
        with pytest.raises(DimensionError):
            ar1_step(np.ones(3), params(), 1)

    @pytest.mark.slow
    def test_stationary_statistics(self):
        """Test sample mean, variance and drift over 10⁵ steps against their closed forms."""
        steps = 100_000
        p = params(alpha=0.5, sigma2=1e-4)
        traj = ar1_trajectory(p, steps)
        mean, variance = stationary_stats(p)

        # Standard error of an AR(1) sample mean, pooled over independent buses
        se = np.sqrt(variance / (steps * p.n) * (1.0 + p.alpha) / (1.0 - p.alpha))
        assert abs(traj.mean() - float(np.mean(mean))) <= 3.0 * se
        assert traj.var(axis=0).mean() == pytest.approx(variance, rel=0.05)

        drift = np.sum(np.diff(traj, axis=0) ** 2, axis=1).mean()
        assert drift == pytest.approx(expected_drift_bound(p, np.ones(4)), rel=0.05)


class TestStationarity:
    """Tests for stationary moments."""

    def test_scalar_moments(self):
        """Test mean c̄/(1−α) and variance σ²/(1−α²)."""
        mean, variance = stationary_stats(params(alpha=0.2, sigma2=2e-6))
        np.testing.assert_allclose(mean, np.ones(4))
        assert variance == pytest.approx(2e-6 / 0.96)

    def test_lyapunov_equation(self):
        """Test Σ = AΣAᵀ + σ²I for a general transition."""
        A = np.array([[0.5, 0.1], [0.0, 0.3]])
        p = Ar1Params(sigma2=1e-4, cbar=[0.5, 0.7], transition=A)
        sigma = stationary_covariance(p)
        np.testing.assert_allclose(sigma, A @ sigma @ A.T + 1e-4 * np.eye(2), atol=1e-16)
        mean, _ = stationary_stats(p)
        np.testing.assert_allclose((np.eye(2) - A) @ mean, [0.5, 0.7])

    def test_unstable_transition(self):
        """Test that a spectral radius ≥ 1 is refused."""
        p = Ar1Params(cbar=[0.0, 0.0], transition=np.array([[1.2, 0.0], [0.0, 0.1]]))
        with pytest.raises(StationarityError, match="spectral radius"):
            check_stationary(p)

    def test_drift_bound_formula(self):
        """Test B₁ = 2σ²Tr(D)/(1+α)."""
        d = np.array([1.0, 2.0, 3.0, 4.0])
        assert expected_drift_bound(params(alpha=0.5, sigma2=1e-6), d) == pytest.approx(
            2e-6 * 10 / 1.5
        )

    def test_drift_bound_general_matches_scalar(self):
        """Test that A = αI in matrix form gives the scalar B₁."""
        d = np.array([2.0, 5.0])
        scalar = Ar1Params(alpha=0.3, sigma2=1e-5, cbar=[0.7, 0.7])
        general = Ar1Params(sigma2=1e-5, cbar=[0.7, 0.7], transition=0.3 * np.eye(2))
        assert expected_drift_bound(general, d) == pytest.approx(
            expected_drift_bound(scalar, d), rel=1e-12
        )


# =============================================================================
# Mean profiles and parameter resolution
# =============================================================================


class TestMeanProfiles:
    """Tests for stationary mean profiles."""

    def test_feeder_ramp_ends(self):
        """Test 1.025 at bus 1 and 0.975 at the far end."""
        ramp = feeder_ramp_profile(20)
        assert ramp[0] == pytest.approx(1.025)
        assert ramp[-1] == pytest.approx(0.975)
        assert np.all(np.diff(ramp) < 0)

    def test_single_bus(self):
        """Test that one bus sits at the top of the ramp."""
        np.testing.assert_array_equal(feeder_ramp_profile(1), [1.025])

    def test_depth_ramp_on_chain(self, network_factory):
        """Test that the depth ramp of a chain is the feeder ramp."""
        layout = analyze_topology(network_factory.chain(9))
        np.testing.assert_allclose(depth_ramp_profile(layout.depth[1:]), feeder_ramp_profile(9))

    def test_depth_ramp_on_tree(self):
        """Test that buses at equal depth share a mean."""
        np.testing.assert_allclose(
            depth_ramp_profile(np.array([1, 2, 2, 3])), [1.025, 1.0, 1.0, 0.975]
        )

    def test_explicit_profile_length(self, network_factory):
        """Test that explicit profiles must have N entries."""
        layout = analyze_topology(network_factory.chain(3))
        spec = DynamicsSpec(mean_profile=[1.0, 1.0], limits=LIMITS)
        with pytest.raises(DimensionError):
            resolve_mean_profile(spec, layout)

    def test_flat_profile(self, network_factory):
        """Test the flat profile."""
        layout = analyze_topology(network_factory.chain(3))
        spec = DynamicsSpec(mean_profile="flat", limits=LIMITS)
        np.testing.assert_array_equal(resolve_mean_profile(spec, layout), np.ones(3))


class TestBuildAr1Params:
    """Tests for resolving dynamics blocks."""

    def test_drift_gives_profile_mean(self, network_factory):
        """Test c̄ = (1−α)·mean."""
        layout = analyze_topology(network_factory.chain(5))
        p = build_ar1_params(DynamicsSpec(alpha=0.4, sigma2=1e-6, limits=LIMITS), layout)
        mean, _ = stationary_stats(p)
        np.testing.assert_allclose(mean, feeder_ramp_profile(5))

    def test_seed_override(self, network_factory):
        """Test that a per-realization seed replaces the block's seed."""
        layout = analyze_topology(network_factory.chain(2))
        spec = DynamicsSpec(seed=3, limits=LIMITS)
        assert build_ar1_params(spec, layout).seed == 3
        assert build_ar1_params(spec, layout, seed=99).seed == 99

    def test_unstable_transition_rejected(self, network_factory):
        """Test that an explosive transition block is refused."""
        layout = analyze_topology(network_factory.chain(1))
        spec = DynamicsSpec(transition=[[1.1]], limits=LIMITS)
        with pytest.raises(StationarityError):
            build_ar1_params(spec, layout)


# =============================================================================
# VAR limits
# =============================================================================


class TestLimits:
    """Tests for VAR limit trajectories."""

    def test_static_profile(self):
        """Test that scalars broadcast and stay fixed."""
        profile = build_limits_profile(LimitsSpec(lower=-0.1, upper=[0.1, 0.2]), 2)
        box = limits_at(profile, 1000)
        np.testing.assert_array_equal(box.lower, [-0.1, -0.1])
        np.testing.assert_array_equal(box.upper, [0.1, 0.2])

    def test_scaled_profile_cycles(self):
        """Test that multipliers repeat over the horizon."""
        spec = LimitsSpec(mode="scaled", lower=-0.2, upper=0.2, scale=[1.0, 0.5])
        profile = build_limits_profile(spec, 3)
        assert profile.mode == LimitsMode.SCALED
        np.testing.assert_allclose(limits_at(profile, 3).upper, np.full(3, 0.1))
        np.testing.assert_allclose(limits_at(profile, 4).lower, np.full(3, -0.2))

    def test_bad_multiplier(self):
        """Test rejection of a multiplier above one."""
        base = VarLimits(lower=[-0.1], upper=[0.1])
        with pytest.raises(ValueError):
            LimitsProfile(mode="scaled", base=base, scale_series=[1.5])
