"""
Tests for the oracle service: box-QP optimizer and tracking bounds.
"""

import numpy as np
import pytest

from src.config.settings import SimulationSettings
from src.models.control import VarLimits
from src.models.oracle import BoundParams, QpInstance
from src.services.harness_service import compare_bound
from src.services.network_service import build_matrices
from src.services.oracle_service import (
    BoundConfigurationError,
    BoxQpSolver,
    InfeasiblePointError,
    OracleConvergenceError,
    OracleError,
    contraction_factor,
    default_beta_prime,
    estimate_B2,
    kkt_residual,
    objective,
    solve_box_qp,
    solve_box_qp_exhaustive,
    steady_state_bound,
    tracking_bound,
)


def random_instance(network_factory, rng, n: int, box: float | None = None) -> QpInstance:
    """Instance on a random tree with random nominal voltages and box."""
    mat = build_matrices(network_factory.random_tree(rng, n))
    upper = rng.uniform(0.01, 0.2, n) if box is None else np.full(n, box)
    lower = -rng.uniform(0.01, 0.2, n) if box is None else np.full(n, -box)
    return QpInstance(
        X=mat.X,
        vbar=rng.uniform(0.95, 1.05, n),
        mu=np.ones(n),
        limits=VarLimits(lower=lower, upper=upper),
    )


# =============================================================================
# Optimizer
# =============================================================================


class TestSolveBoxQp:
    """Tests for the box-QP oracle."""

    def test_matches_exhaustive(self, network_factory, rng):
        """Test against 3ᴺ enumeration on small random instances."""
        for _ in range(30):
            inst = random_instance(network_factory, rng, int(rng.integers(1, 7)))
            q = solve_box_qp(inst)
            np.testing.assert_allclose(q, solve_box_qp_exhaustive(inst), atol=1e-9)
            assert kkt_residual(inst, q) <= 1e-12

    def test_interior_optimum(self, network_factory, rng):
        """Test that a wide box gives Xq* = μ − v̄."""
        inst = random_instance(network_factory, rng, 5, box=100.0)
        q = solve_box_qp(inst)
        np.testing.assert_allclose(inst.X @ q + inst.vbar, inst.mu, atol=1e-12)
        assert objective(inst, q) == pytest.approx(0.0, abs=1e-20)

    def test_degenerate_box(self, network_factory):
        """Test that lower = upper pins the optimizer."""
        mat = build_matrices(network_factory.chain(3))
        limits = VarLimits(lower=[0.01, 0.02, 0.03], upper=[0.01, 0.02, 0.03])
        inst = QpInstance(X=mat.X, vbar=np.full(3, 1.02), mu=np.ones(3), limits=limits)
        np.testing.assert_array_equal(solve_box_qp(inst), [0.01, 0.02, 0.03])

    def test_warm_start(self, network_factory, rng):
        """Test that the starting point does not change the answer."""
        inst = random_instance(network_factory, rng, 6)
        cold = solve_box_qp(inst)
        warm = solve_box_qp(inst, warm=inst.limits.upper)
        np.testing.assert_allclose(warm, cold, atol=1e-10)

    def test_solver_from_matrices(self, network_factory, rng):
        """Test the shared solver built from network matrices."""
        mat = build_matrices(network_factory.random_tree(rng, 8))
        solver = BoxQpSolver.from_matrices(mat)
        c = rng.uniform(-0.05, 0.05, 8)
        q, residual, _ = solver.solve(c, np.full(8, -0.05), np.full(8, 0.05))
        assert residual <= 1e-12
        assert np.all(np.abs(q) <= 0.05)

    def test_active_set_few_solves(self, network_factory):
        """Test that a feeder with most buses at a bound solves in a few linear solves."""
        mat = build_matrices(network_factory.chain(40))
        solver = BoxQpSolver.from_matrices(mat)
        lower, upper = np.full(40, -0.02), np.full(40, 0.02)
        # 25 buses at the upper limit, 5 at the lower one, 10 free at zero
        target = np.concatenate([np.full(25, 0.02), np.full(5, -0.02), np.zeros(10)])
        g = np.concatenate([np.full(25, -0.05), np.full(5, 0.05), np.zeros(10)])
        c = g - mat.X @ target

        q, residual, iterations = solver.solve(c, lower, upper)
        np.testing.assert_allclose(q, target, atol=1e-9)
        assert residual <= 1e-12
        assert iterations < solver.active_set_iter

        _, warm_residual, warm_iterations = solver.solve(c + 1e-6, lower, upper, warm=q)
        assert warm_residual <= 1e-12
        assert warm_iterations <= 3

    def test_gradient_fallback(self, network_factory, rng):
        """Test that the projected-gradient fallback still meets the tolerance."""
        settings = SimulationSettings(_env_file=None, oracle_active_set_iter=1)
        for _ in range(10):
            inst = random_instance(network_factory, rng, int(rng.integers(2, 7)), box=0.02)
            q = solve_box_qp(inst, settings=settings)
            np.testing.assert_allclose(q, solve_box_qp_exhaustive(inst), atol=1e-9)
            assert kkt_residual(inst, q) <= 1e-12

    def test_iteration_cap(self, network_factory, rng):
        """Test that an unreachable tolerance raises with the residual."""
        inst = random_instance(network_factory, rng, 5, box=100.0)
        settings = SimulationSettings(_env_file=None, oracle_max_iter=2, oracle_tol=1e-300)
        with pytest.raises(OracleConvergenceError) as exc_info:
            solve_box_qp(inst, settings=settings)
        assert exc_info.value.iterations == 2

    def test_infeasible_point(self, network_factory):
        """Test that the KKT check refuses points outside the box."""
        mat = build_matrices(network_factory.chain(2))
        limits = VarLimits(lower=[-0.1, -0.1], upper=[0.1, 0.1])
        inst = QpInstance(X=mat.X, vbar=np.ones(2), mu=np.ones(2), limits=limits)
        with pytest.raises(InfeasiblePointError, match=r"buses \[2\]"):
            kkt_residual(inst, np.array([0.0, 0.5]))

    def test_exhaustive_size_limit(self, network_factory):
        """Test that enumeration refuses large N."""
        mat = build_matrices(network_factory.chain(11))
        limits = VarLimits(lower=np.full(11, -0.1), upper=np.full(11, 0.1))
        inst = QpInstance(X=mat.X, vbar=np.ones(11), mu=np.ones(11), limits=limits)
        with pytest.raises(OracleError, match="N <= 10"):
            solve_box_qp_exhaustive(inst)


# =============================================================================
# Tracking bounds
# =============================================================================


class TestTrackingBound:
    """Tests for the closed-form tracking-error bound."""

    @pytest.fixture
    def bp(self) -> BoundParams:
        """C = M = 1, ε = 0.5, B₂ = 1e-4."""
        return BoundParams(c_min=1.0, m_lip=1.0, epsilon=0.5, b2=1e-4)

    def test_default_contraction(self, bp):
        """Test ρ = 1 − εCM/(C+M) and Θ = (C+M−εCM)/(εCM)·B₂."""
        rho, theta = contraction_factor(bp)
        assert rho == pytest.approx(0.75)
        assert theta == pytest.approx(3e-4)

    def test_explicit_default_beta_prime(self):
        """Test that passing the default β′ explicitly gives the same ρ and Θ."""
        implicit = BoundParams(c_min=0.2, m_lip=3.0, epsilon=0.4, b2=2e-5)
        explicit = implicit.model_copy(update={"beta_prime": default_beta_prime(implicit)})
        for got, want in zip(contraction_factor(explicit), contraction_factor(implicit)):
            assert got == pytest.approx(want, rel=1e-12)

    def test_step_above_dynamic_bound(self):
        """Test that ε > 2/(C+M) is refused."""
        bp = BoundParams(c_min=1.0, m_lip=3.0, epsilon=0.51, b2=0.0)
        with pytest.raises(BoundConfigurationError) as exc_info:
            contraction_factor(bp)
        assert exc_info.value.epsilon == 0.51

    def test_step_at_dynamic_bound(self):
        """Test that ε = 2/(C+M) still gives a finite bound."""
        bp = BoundParams(c_min=1.0, m_lip=1.0, epsilon=1.0, b2=1e-6)
        assert default_beta_prime(bp) == np.inf
        rho, _ = contraction_factor(bp)
        assert rho == pytest.approx(0.5)
        assert np.isfinite(steady_state_bound(bp))

    def test_large_beta_prime_refused(self, bp):
        """Test that an explicit β′ giving ρ ≥ 1 is refused."""
        with pytest.raises(BoundConfigurationError, match="not in"):
            contraction_factor(bp.model_copy(update={"beta_prime": 10.0}))

    def test_zero_contraction_refused(self):
        """Test that an explicit β′ with ρ = 0 is refused."""
        bp = BoundParams(c_min=1.0, m_lip=1.0, epsilon=1.0, b2=1e-6, beta_prime=1.0)
        with pytest.raises(BoundConfigurationError, match="not in") as exc_info:
            contraction_factor(bp)
        assert exc_info.value.rho == pytest.approx(0.0)

    def test_curve_endpoints(self, bp):
        """Test e₀ at k = 0 and the steady state for large k."""
        assert tracking_bound(bp, 0.02, 0) == pytest.approx(0.02)
        assert tracking_bound(bp, 0.02, 10_000) == pytest.approx(steady_state_bound(bp))

    def test_curve_vectorized(self, bp):
        """Test evaluation over an array of steps."""
        curve = tracking_bound(bp, 0.02, np.arange(50))
        assert curve.shape == (50,)
        assert np.all(np.diff(curve) < 0)

    def test_steady_state_closed_form(self, bp):
        """Test Θ/(1−ρ) = (C+M)(C+M−εCM)/(εCM)²·B₂."""
        rho, theta = contraction_factor(bp)
        assert steady_state_bound(bp) == pytest.approx(theta / (1.0 - rho))
        assert steady_state_bound(bp) == pytest.approx(1.2e-3)


class TestBoundMonotonicity:
    """Property checks of the bound as the step-size grows."""

    @staticmethod
    def eps_grid(c_min: float, m_lip: float) -> np.ndarray:
        return np.linspace(0.02, 1.0, 25) * 2.0 / (c_min + m_lip)

    def test_steady_state_decreasing(self, rng):
        """Test that the steady-state bound strictly decreases on (0, 2/(C+M)]."""
        for _ in range(50):
            m_lip = rng.uniform(0.5, 5.0)
            c_min = m_lip * rng.uniform(0.001, 0.95)
            b2 = rng.uniform(1e-8, 1e-3)
            values = [
                steady_state_bound(BoundParams(c_min=c_min, m_lip=m_lip, epsilon=eps, b2=b2))
                for eps in self.eps_grid(c_min, m_lip)
            ]
            assert np.all(np.diff(values) < 0), (c_min, m_lip)

    def test_compare_bound_larger_step_smaller_steady_state(self, rng):
        """Test that compare_bound reports a smaller steady state and ρ for larger ε."""
        empirical = np.geomspace(1e-2, 1e-6, 200)
        for _ in range(20):
            m_lip = rng.uniform(0.5, 5.0)
            c_min = m_lip * rng.uniform(0.001, 0.95)
            reports = [
                compare_bound(
                    empirical, BoundParams(c_min=c_min, m_lip=m_lip, epsilon=eps, b2=1e-6)
                )
                for eps in self.eps_grid(c_min, m_lip)
            ]
            assert np.all(np.diff([r.steady_state_bound for r in reports]) < 0)
            assert np.all(np.diff([r.rho for r in reports]) < 0)
            assert np.all(np.diff([r.ratio for r in reports]) > 0)


class TestEstimateB2:
    """Tests for empirical optimizer drift."""

    def test_weighted_drift(self):
        """Test max and mean of ‖Δq*‖²_{D⁻¹}."""
        trace = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 2.0]])
        est = estimate_B2(trace, np.array([1.0, 2.0]))
        assert est.max_drift == pytest.approx(2.0)
        assert est.mean_drift == pytest.approx(1.5)
        assert est.samples == 2

    def test_needs_two_steps(self):
        """Test rejection of a single optimizer."""
        with pytest.raises(OracleError):
            estimate_B2(np.zeros((1, 3)), np.ones(3))
