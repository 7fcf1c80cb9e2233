"""
Harness service: runs the closed control loop.

Each step k follows a fixed order:
1. the environment moves (v̄_k and the VAR box), q_k is re-projected
2. physics produces the measured voltage v_k
3. the oracle solves for q*_k
4. metrics are recorded
5. the active buses apply the gradient-projection update to get q_{k+1}

Ensembles run episodes on a thread pool; every realization has its own
seed derived from the master seed, and statistics are aggregated in
realization order, so results do not depend on the worker count.
"""

import asyncio
import hashlib
import time
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import structlog
from numpy.typing import NDArray

from src.config.settings import SimulationSettings
from src.models.control import ControllerConfig
from src.models.dynamics import LimitsProfile
from src.models.network import NetworkMatrices
from src.models.oracle import B2Estimate, BoundParams
from src.models.results import (
    TRACE_COLUMNS,
    BoundReport,
    EnsembleResult,
    GridState,
    ResolvedParameters,
    TrackingRecord,
)
from src.models.scenario import PhysicsMode, Scenario, StabilityMode
from src.models.schedule import Schedule
from src.services.analysis_service import b2_b1_ratio, steady_state
from src.services.control_service import (
    ControlError,
    classical_async_step_size_bound,
    dynamic_step_size_bound,
    epsilon_rule_name,
    gp_step,
    linear_rate,
    project_box,
    resolve_controller,
    spectral_radius,
    sync_step_size_bound,
)
from src.services.dynamics_service import (
    DynamicsError,
    ar1_step,
    build_ar1_params,
    build_limits_profile,
    expected_drift_bound,
    initial_vbar,
    limits_at,
)
from src.services.network_service import NetworkError, build_matrices, sweep_voltage
from src.services.oracle_service import (
    BoundConfigurationError,
    BoxQpSolver,
    OracleError,
    contraction_factor,
    estimate_B2,
    steady_state_bound,
    tracking_bound,
)
from src.services.scheduler_service import build_schedule
from src.validators.custom_types import broadcast_vector

logger = structlog.get_logger(__name__)

OBJECTIVE_SLACK = 1e-9


class HarnessError(Exception):
    """Base exception for simulation errors, tagged with seed and step."""

    def __init__(self, message: str, seed: int | None = None, step: int | None = None) -> None:
        super().__init__(message)
        self.seed = seed
        self.step = step


class StabilityError(HarnessError):
    """Raised in strict mode when the step-size is outside the stable range."""

    pass


class EnsembleError(HarnessError):
    """Raised when an episode of an ensemble fails."""

    pass


def derive_seed(master_seed: int, index: int) -> int:
    """
    Seed of realization `index`: the first 8 bytes of
    blake2b("<master_seed>:<index>") read as a little-endian integer.
    """
    digest = hashlib.blake2b(f"{master_seed}:{index}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class PreparedRun:
    """Everything an episode needs, built once per scenario and shared read-only."""

    scenario: Scenario
    matrices: NetworkMatrices
    controller: ControllerConfig
    schedule: Schedule
    limits: LimitsProfile
    solver: BoxQpSolver
    resolved: ResolvedParameters
    initial_q: NDArray[np.float64]

    @property
    def bound_params(self) -> BoundParams | None:
        """Bound parameters without B₂, None when the bound is undefined."""
        if self.resolved.bound_rho is None:
            return None
        return BoundParams(
            c_min=self.matrices.c_min,
            m_lip=self.matrices.m_lip,
            epsilon=self.controller.epsilon,
            b2=0.0,
            beta_prime=self.scenario.beta_prime,
        )


def _bound_curve(
    prepared: PreparedRun, b2: float, initial_err: float, horizon: int
) -> NDArray[np.float64]:
    base = prepared.bound_params
    if base is None or not np.isfinite(initial_err):
        return np.full(horizon, np.nan)
    bp = base.model_copy(update={"b2": b2})
    return np.asarray(tracking_bound(bp, initial_err, np.arange(horizon)), dtype=np.float64)


class HarnessService:
    """
    Service layer for simulation runs.

    Prepares scenarios (matrices, schedule, controller), runs single
    episodes and thread-pooled ensembles, and compares ensemble tracking
    errors with the theoretical bound.
    """

    def __init__(self, settings: SimulationSettings | None = None) -> None:
        """
        Initialize harness service.

        Args:
            settings: Numerical and execution settings
        """
        self.settings = settings or SimulationSettings()

    # =========================================================================
    # Preparation
    # =========================================================================

    def resolve(
        self, scenario: Scenario, matrices: NetworkMatrices, cfg: ControllerConfig
    ) -> ResolvedParameters:
        """Derive step-size bounds and stability numbers for a resolved controller."""
        safety = scenario.controller.safety or self.settings.safety_fraction
        radius = spectral_radius(matrices, cfg.epsilon)
        try:
            bound_rho, _ = contraction_factor(
                BoundParams(
                    c_min=matrices.c_min,
                    m_lip=matrices.m_lip,
                    epsilon=cfg.epsilon,
                    b2=0.0,
                    beta_prime=scenario.beta_prime,
                )
            )
        except BoundConfigurationError:
            bound_rho = None

        return ResolvedParameters(
            n=matrices.n,
            c_min=matrices.c_min,
            m_lip=matrices.m_lip,
            epsilon=cfg.epsilon,
            epsilon_rule=epsilon_rule_name(scenario.controller),
            safety=safety,
            sync_bound=sync_step_size_bound(matrices),
            dynamic_bound=dynamic_step_size_bound(matrices),
            classical_bound=classical_async_step_size_bound(
                matrices, scenario.schedule.K, matrices.n
            ),
            spectral_radius=radius,
            linear_rate=linear_rate(matrices, cfg.epsilon),
            bound_rho=bound_rho,
            beta_prime=scenario.beta_prime,
            stable=radius < 1.0,
        )

    def prepare(
        self,
        scenario: Scenario,
        schedule_sets: list[list[int]] | None = None,
    ) -> PreparedRun:
        """
        Build matrices, schedule, controller and oracle for a scenario.

        Args:
            scenario: Validated scenario
            schedule_sets: Parsed schedule file for file mode

        Returns:
            PreparedRun shared by all episodes

        Raises:
            StabilityError: In strict mode, if the step-size is unstable
        """
        n, horizon = scenario.n, scenario.horizon
        matrices = build_matrices(scenario.topology, scenario.controller.scaling, self.settings)
        schedule = build_schedule(scenario.schedule, n, horizon, schedule_sets)
        controller = resolve_controller(
            scenario.controller,
            matrices,
            K=scenario.schedule.K,
            default_safety=self.settings.safety_fraction,
        )
        limits = build_limits_profile(scenario.dynamics.limits, n)
        build_ar1_params(scenario.dynamics, matrices.layout)
        resolved = self.resolve(scenario, matrices, controller)

        if scenario.mode == StabilityMode.STRICT and not resolved.stable:
            logger.error(
                "unstable_step_size",
                epsilon=resolved.epsilon,
                spectral_radius=resolved.spectral_radius,
            )
            raise StabilityError(
                f"epsilon={resolved.epsilon:.6g} gives spectral radius "
                f"{resolved.spectral_radius:.6g} >= 1 "
                f"(stable below 2/M={resolved.sync_bound:.6g})"
            )
        if resolved.bound_rho is None:
            logger.warning(
                "tracking_bound_undefined",
                epsilon=resolved.epsilon,
                beta_prime=scenario.beta_prime,
                dynamic_bound=resolved.dynamic_bound,
            )

        return PreparedRun(
            scenario=scenario,
            matrices=matrices,
            controller=controller,
            schedule=schedule,
            limits=limits,
            solver=BoxQpSolver.from_matrices(matrices, self.settings),
            resolved=resolved,
            initial_q=broadcast_vector(scenario.initial_q, n),
        )

    # =========================================================================
    # Episodes
    # =========================================================================

    def run_episode(
        self,
        prepared: PreparedRun,
        seed: int,
        on_step: Callable[[GridState], None] | None = None,
    ) -> TrackingRecord:
        """
        Simulate one realization.

        Args:
            prepared: Prepared scenario
            seed: Realization seed; the AR(1) seed is derived from it and the
                scenario's dynamics seed
            on_step: Called with the grid state of every step

        Returns:
            Per-step metrics

        Raises:
            HarnessError: Any module error, tagged with seed and step
        """
        scenario = prepared.scenario
        mat = prepared.matrices
        cfg = prepared.controller
        strict = scenario.mode == StabilityMode.STRICT
        sweep = scenario.physics == PhysicsMode.SWEEP
        horizon, n = scenario.horizon, mat.n
        X, B, d, mu = mat.X, mat.B, mat.d, cfg.mu
        active_steps = prepared.schedule.active
        started = time.perf_counter()

        params = build_ar1_params(
            scenario.dynamics, mat.layout, seed=derive_seed(scenario.dynamics.seed, seed)
        )
        zeros = np.zeros(n)

        traces = {name: np.full(horizon, np.nan) for name in TRACE_COLUMNS}
        optimizers = np.empty((horizon, n))
        q = prepared.initial_q.copy()
        q_star: NDArray[np.float64] | None = None
        vbar = np.empty(n)
        last_key: tuple[NDArray[np.float64], object] | None = None
        cum_updates = 0
        diverged = False
        k = 0

        try:
            for k in range(horizon):
                # 1. environment
                vbar = initial_vbar(params) if k == 0 else ar1_step(vbar, params, k)
                limits = limits_at(prepared.limits, k)
                q = project_box(q, limits)

                # 2. physics
                if sweep:
                    q_bg = B @ (vbar - mat.v0)
                    v = sweep_voltage(
                        scenario.topology, zeros, q + q_bg, mat.layout, self.settings
                    )
                else:
                    v = X @ q + vbar

                # 3. oracle, reused while the problem data are unchanged
                if (
                    q_star is None
                    or last_key is None
                    or last_key[1] is not limits
                    or not np.array_equal(last_key[0], vbar)
                ):
                    q_star, _, _ = prepared.solver.solve(
                        vbar - mu, limits.lower, limits.upper, warm=q_star
                    )
                    last_key = (vbar, limits)
                optimizers[k] = q_star

                # 4. metrics
                g = v - mu
                g_star = X @ q_star + vbar - mu
                err = q - q_star
                traces["mismatch_l2"][k] = np.sqrt(g @ g)
                traces["objective"][k] = 0.5 * (g @ B @ g)
                traces["tracking_err_weighted"][k] = np.sum(err * err / d)
                traces["oracle_objective"][k] = 0.5 * (g_star @ B @ g_star)
                traces["cum_updates"][k] = cum_updates

                if on_step is not None:
                    on_step(GridState(k=k, q=q, vbar=vbar, v=v, limits=limits))

                if (
                    strict
                    and not sweep
                    and traces["objective"][k] < traces["oracle_objective"][k] - OBJECTIVE_SLACK
                ):
                    raise HarnessError(
                        f"Iterate objective {traces['objective'][k]:.6g} below optimum "
                        f"{traces['oracle_objective'][k]:.6g}",
                        seed=seed,
                        step=k,
                    )

                # 5. control
                active = active_steps[k]
                q = gp_step(q, v, cfg, limits, active)
                cum_updates += int(np.count_nonzero(active))

                if not np.all(np.isfinite(q)):
                    raise ControlError("VAR injections became non-finite")

        except (ControlError, NetworkError, OracleError, DynamicsError, FloatingPointError) as e:
            if strict:
                raise HarnessError(f"Step {k}, seed {seed}: {e}", seed=seed, step=k) from e
            logger.warning("episode_diverged", seed=seed, step=k, error=str(e))
            diverged = True

        completed = k + 1 if not diverged else k
        b2 = (
            estimate_B2(optimizers[:completed], d) if completed >= 2 else B2Estimate(samples=0)
        )
        traces["bound"] = _bound_curve(
            prepared, b2.max_drift, traces["tracking_err_weighted"][0], horizon
        )

        logger.debug(
            "episode_finished",
            seed=seed,
            steps=completed,
            diverged=diverged,
            wall_s=round(time.perf_counter() - started, 4),
        )

        return TrackingRecord(
            seed=seed,
            final_q=q,
            b2=b2,
            diverged=diverged,
            **traces,
        )

    # =========================================================================
    # Ensembles
    # =========================================================================

    async def run_ensemble(
        self,
        prepared: PreparedRun,
        realizations: int | None = None,
        master_seed: int | None = None,
        workers: int | None = None,
    ) -> EnsembleResult:
        """
        Run R independent episodes and aggregate them.

        Args:
            prepared: Prepared scenario
            realizations: R (scenario value when None)
            master_seed: Master seed (scenario value when None)
            workers: Thread count (settings value when None)

        Returns:
            Per-step means and standard deviations

        Raises:
            EnsembleError: If an episode fails, with the failing seed
        """
        scenario = prepared.scenario
        count = realizations or scenario.realizations
        master = scenario.master_seed if master_seed is None else master_seed
        workers = workers or self.settings.workers
        seeds = [derive_seed(master, r) for r in range(count)]

        logger.info("ensemble_started", realizations=count, master_seed=master, workers=workers)
        started = time.perf_counter()

        loop = asyncio.get_running_loop()
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                loop.run_in_executor(pool, self.run_episode, prepared, seed) for seed in seeds
            ]
            outcomes = await asyncio.gather(*futures, return_exceptions=True)

        records: list[TrackingRecord] = []
        for seed, outcome in zip(seeds, outcomes, strict=True):
            if isinstance(outcome, BaseException):
                step = outcome.step if isinstance(outcome, HarnessError) else None
                raise EnsembleError(
                    f"Realization with seed {seed} failed: {outcome}", seed=seed, step=step
                ) from outcome
            records.append(outcome)

        result = aggregate(prepared, records)
        logger.info(
            "ensemble_finished",
            realizations=count,
            wall_s=round(time.perf_counter() - started, 3),
        )
        return result

    def compare_bound(self, result: EnsembleResult, prepared: PreparedRun) -> BoundReport:
        """
        Compare the ensemble tracking error with the theoretical bound.

        Raises:
            BoundConfigurationError: If the bound is undefined for the step-size
        """
        bp = BoundParams(
            c_min=prepared.matrices.c_min,
            m_lip=prepared.matrices.m_lip,
            epsilon=prepared.controller.epsilon,
            b2=result.b2.max_drift,
            beta_prime=prepared.scenario.beta_prime,
        )
        params = build_ar1_params(prepared.scenario.dynamics, prepared.matrices.layout)
        b1 = expected_drift_bound(params, prepared.matrices.d)
        return compare_bound(
            result.mean["tracking_err_weighted"],
            bp,
            b1=b1,
            b2_mean=result.b2.mean_drift,
            slack=self.settings.bound_slack,
        )


def aggregate(prepared: PreparedRun, records: list[TrackingRecord]) -> EnsembleResult:
    """
    Stack episode traces in realization order and take per-step statistics.

    The bound column is recomputed from the ensemble: B₂ is the largest
    drift seen in any realization and the initial error is the mean one.
    """
    mean: dict[str, NDArray[np.float64]] = {}
    std: dict[str, NDArray[np.float64]] = {}
    for name in TRACE_COLUMNS:
        stacked = np.stack([record.column(name) for record in records])
        mean[name] = np.mean(stacked, axis=0)
        std[name] = np.std(stacked, axis=0)

    b2 = B2Estimate(
        max_drift=max(record.b2.max_drift for record in records),
        mean_drift=float(np.mean([record.b2.mean_drift for record in records])),
        samples=sum(record.b2.samples for record in records),
    )
    horizon = records[0].horizon
    initial_err = float(mean["tracking_err_weighted"][0])
    mean["bound"] = _bound_curve(prepared, b2.max_drift, initial_err, horizon)
    std["bound"] = np.zeros(horizon)

    return EnsembleResult(
        mean=mean,
        std=std,
        seeds=[record.seed for record in records],
        b2=b2,
        final_q=np.stack([record.final_q for record in records]),
        diverged=any(record.diverged for record in records),
    )


def compare_bound(
    empirical: NDArray[np.float64],
    bp: BoundParams,
    b1: float = 0.0,
    b2_mean: float | None = None,
    slack: float = 1e-9,
) -> BoundReport:
    """
    Per-step and steady-state comparison of an empirical tracking error with
    the bound evaluated from its own initial value.

    Args:
        empirical: Mean tracking error per step
        bp: Bound parameters, with B₂ set
        b1: Nominal-voltage drift constant, for the B₂/B₁ ratio
        b2_mean: Mean drift, reported alongside the max in bp
        slack: Relative and absolute tolerance of the per-step check

    Raises:
        BoundConfigurationError: If the bound is undefined
    """
    empirical = np.asarray(empirical, dtype=np.float64)
    rho, theta = contraction_factor(bp)
    bound = np.asarray(
        tracking_bound(bp, float(empirical[0]), np.arange(empirical.shape[0])), dtype=np.float64
    )
    ss_empirical = steady_state(empirical)
    ss_bound = steady_state_bound(bp)

    positive = bound > 0
    max_step_ratio = (
        float(np.max(empirical[positive] / bound[positive])) if positive.any() else 0.0
    )

    return BoundReport(
        empirical=empirical,
        bound=bound,
        steady_state_empirical=ss_empirical,
        steady_state_bound=ss_bound,
        ratio=ss_empirical / ss_bound if ss_bound > 0 else float("nan"),
        max_step_ratio=max_step_ratio,
        holds=bool(np.all(empirical <= bound * (1.0 + slack) + slack)),
        rho=rho,
        theta=theta,
        b2_max=bp.b2,
        b2_mean=bp.b2 if b2_mean is None else b2_mean,
        b1=b1,
        b2_b1_ratio=b2_b1_ratio(bp.b2, b1),
    )
