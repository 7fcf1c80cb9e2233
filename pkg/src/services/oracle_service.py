"""
Oracle service: the instantaneous optimizer of the box-constrained
voltage-mismatch objective, and the theoretical tracking-error bounds.

The objective at step k is f_k(q) = ½ (Xq + v̄ − μ)ᵀ B (Xq + v̄ − μ) with
gradient Xq + v̄ − μ. The solver runs a primal-dual active-set iteration
on the box, solving the free-set linear system exactly at each pass, and
falls back to diagonally scaled projected gradient with step 2/(C+M) when
the bound pattern cycles; a candidate is accepted once its KKT residual is
below tolerance.
"""

import itertools

import numpy as np
import structlog
from numpy.typing import NDArray
from scipy import linalg

from src.config.settings import SimulationSettings
from src.models.network import NetworkMatrices
from src.models.oracle import B2Estimate, BoundParams, QpInstance

logger = structlog.get_logger(__name__)

EXHAUSTIVE_MAX_N = 10


class OracleError(Exception):
    """Base exception for oracle errors."""

    pass


class OracleConvergenceError(OracleError):
    """Raised when the solver hits its iteration cap before the KKT tolerance."""

    def __init__(self, message: str, residual: float, iterations: int) -> None:
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class InfeasiblePointError(OracleError):
    """Raised when a point handed to the KKT check lies outside the box."""

    pass


class BoundConfigurationError(OracleError):
    """Raised when (ε, β′) does not give a contraction factor in (0, 1)."""

    def __init__(self, message: str, epsilon: float, beta_prime: float | None, rho: float) -> None:
        super().__init__(message)
        self.epsilon = epsilon
        self.beta_prime = beta_prime
        self.rho = rho


# =============================================================================
# Objective and optimality
# =============================================================================


def objective(inst: QpInstance, q: NDArray[np.float64]) -> float:
    """f(q) = ½ (Xq + v̄ − μ)ᵀ X⁻¹ (Xq + v̄ − μ)."""
    g = inst.X @ q + inst.vbar - inst.mu
    return 0.5 * float(g @ linalg.solve(inst.X, g, assume_a="pos"))


def box_kkt_residual(
    q: NDArray[np.float64],
    g: NDArray[np.float64],
    lower: NDArray[np.float64],
    upper: NDArray[np.float64],
) -> float:
    """
    Largest violation of the box first-order conditions.

    Interior coordinates need g_j = 0, coordinates at the lower bound need
    g_j ≥ 0, at the upper bound g_j ≤ 0. Fixed coordinates (lower = upper)
    never violate.
    """
    at_lower = q == lower
    at_upper = q == upper
    violation = np.where(
        at_lower & at_upper,
        0.0,
        np.where(at_lower, np.maximum(0.0, -g), np.where(at_upper, np.maximum(0.0, g), np.abs(g))),
    )
    return float(np.max(violation)) if violation.size else 0.0


def kkt_residual(inst: QpInstance, q: NDArray[np.float64]) -> float:
    """
    KKT residual of q for the instance.

    Raises:
        InfeasiblePointError: If q lies outside the box
    """
    q = np.asarray(q, dtype=np.float64)
    lower, upper = inst.limits.lower, inst.limits.upper
    outside = np.flatnonzero((q < lower) | (q > upper))
    if outside.size:
        raise InfeasiblePointError(f"Point lies outside the box at buses {(outside + 1).tolist()}")
    g = inst.X @ q + inst.vbar - inst.mu
    return box_kkt_residual(q, g, lower, upper)


# =============================================================================
# Solvers
# =============================================================================


class BoxQpSolver:
    """
    Primal-dual active-set solver for one reactance matrix, with scaled
    projected gradient as the fallback.

    Each active-set pass guesses which coordinates sit at a bound from the
    trial point q − D·g, solves the equality-constrained problem on the
    remaining free set and repeats until the KKT check passes or a guess
    repeats. Warm-started from the previous step's optimizer this takes a
    handful of dense solves.

    Holds only read-only data after construction and can be shared between
    threads.

    Usage:
        solver = BoxQpSolver.from_matrices(mat, settings)
        q_star, residual, iterations = solver.solve(vbar - mu, lower, upper, warm=q_prev)
    """

    def __init__(
        self,
        X: NDArray[np.float64],
        d: NDArray[np.float64],
        c_min: float,
        m_lip: float,
        settings: SimulationSettings | None = None,
    ) -> None:
        """
        Initialize solver.

        Args:
            X: Reactance matrix
            d: Diagonal scaling used by the gradient steps and trial points
            c_min: Smallest eigenvalue of D^½ X D^½
            m_lip: Largest eigenvalue of D^½ X D^½
            settings: Tolerance, iteration caps and polish period
        """
        settings = settings or SimulationSettings()
        self.X = X
        self.d = d
        self.step = 2.0 / (c_min + m_lip)
        self.tol = settings.oracle_tol
        self.max_iter = settings.oracle_max_iter
        self.active_set_iter = settings.oracle_active_set_iter
        self.polish_every = settings.oracle_polish_every

    @classmethod
    def from_matrices(
        cls, mat: NetworkMatrices, settings: SimulationSettings | None = None
    ) -> "BoxQpSolver":
        """Solver using the network's scaling and eigen-extremes."""
        return cls(mat.X, mat.d, mat.c_min, mat.m_lip, settings)

    @classmethod
    def for_instance(
        cls, inst: QpInstance, settings: SimulationSettings | None = None
    ) -> "BoxQpSolver":
        """Solver with Newton-diagonal scaling computed from the instance."""
        d = 1.0 / np.diag(inst.X)
        sqrt_d = np.sqrt(d)
        w = linalg.eigvalsh(sqrt_d[:, None] * inst.X * sqrt_d[None, :])
        return cls(inst.X, d, float(w[0]), float(w[-1]), settings)

    def solve_free(
        self,
        c: NDArray[np.float64],
        lower: NDArray[np.float64],
        upper: NDArray[np.float64],
        at_lower: NDArray[np.bool_],
        at_upper: NDArray[np.bool_],
    ) -> NDArray[np.float64]:
        """
        Minimizer with the given coordinates pinned to their bounds.

        The free coordinates solve X_FF q_F = −(c_F + X_FA q_A) and may land
        outside the box.
        """
        q = np.where(at_lower, lower, upper).astype(np.float64)
        free = ~(at_lower | at_upper)
        if free.any():
            fixed = ~free
            rhs = -(c[free] + self.X[np.ix_(free, fixed)] @ q[fixed])
            q[free] = linalg.solve(self.X[np.ix_(free, free)], rhs, assume_a="pos")
        return q

    def active_set(
        self,
        q: NDArray[np.float64],
        c: NDArray[np.float64],
        lower: NDArray[np.float64],
        upper: NDArray[np.float64],
    ) -> tuple[NDArray[np.float64], float, int]:
        """
        Primal-dual active-set iteration started from q.

        Coordinates whose trial point q − D·g falls below (above) the box are
        pinned at the lower (upper) bound for the next solve; on the pinned
        set the multiplier is −g, on the free set g vanishes. Stops when the
        clamped iterate passes the KKT check, when a bound pattern comes
        back, or after `oracle_active_set_iter` solves.

        Returns:
            (best clamped iterate, its KKT residual, solves used)
        """
        pinned = lower == upper
        best = np.minimum(np.maximum(q, lower), upper)
        best_res = box_kkt_residual(best, self.X @ best + c, lower, upper)
        seen: set[bytes] = set()
        trial = q - self.d * (self.X @ q + c)

        for solves in range(1, self.active_set_iter + 1):
            at_lower = pinned | (trial < lower)
            at_upper = ~at_lower & (trial > upper)
            key = np.packbits(np.concatenate([at_lower, at_upper])).tobytes()
            if key in seen:
                return best, best_res, solves - 1
            seen.add(key)

            raw = self.solve_free(c, lower, upper, at_lower, at_upper)
            g = self.X @ raw + c
            clamped = np.minimum(np.maximum(raw, lower), upper)
            residual = box_kkt_residual(clamped, self.X @ clamped + c, lower, upper)
            if residual < best_res:
                best, best_res = clamped, residual
            if residual <= self.tol:
                return clamped, residual, solves
            trial = raw - self.d * g

        return best, best_res, self.active_set_iter

    def solve(
        self,
        c: NDArray[np.float64],
        lower: NDArray[np.float64],
        upper: NDArray[np.float64],
        warm: NDArray[np.float64] | None = None,
    ) -> tuple[NDArray[np.float64], float, int]:
        """
        Minimize ½ qᵀXq + cᵀq over the box.

        Runs the active-set iteration from the warm start; if that stalls,
        falls back to scaled projected gradient and restarts the active-set
        iteration from its iterate every `oracle_polish_every` steps.

        Args:
            c: Linear term, v̄ − μ
            lower: Lower bounds
            upper: Upper bounds
            warm: Starting point (zero when None), projected onto the box

        Returns:
            (optimizer, KKT residual, iterations), counting linear solves
            and gradient steps alike

        Raises:
            OracleConvergenceError: If the tolerance is not met within the cap
        """
        q = np.zeros_like(c) if warm is None else np.asarray(warm, dtype=np.float64)
        q = np.minimum(np.maximum(q, lower), upper)

        candidate, residual, used = self.active_set(q, c, lower, upper)
        if residual <= self.tol:
            return candidate, residual, used
        logger.debug("active_set_stalled", residual=residual, solves=used)
        q = candidate

        for iteration in range(used, self.max_iter):
            g = self.X @ q + c
            residual = box_kkt_residual(q, g, lower, upper)
            if residual <= self.tol:
                return q, residual, iteration
            if iteration % self.polish_every == 0:
                candidate, cand_res, _ = self.active_set(q, c, lower, upper)
                if cand_res <= self.tol:
                    return candidate, cand_res, iteration
            q = np.minimum(np.maximum(q - self.step * self.d * g, lower), upper)

        raise OracleConvergenceError(
            f"Oracle stopped after {self.max_iter} iterations with KKT residual {residual:.3e}",
            residual=float(residual),
            iterations=self.max_iter,
        )


def solve_box_qp(
    inst: QpInstance,
    tol: float | None = None,
    warm: NDArray[np.float64] | None = None,
    settings: SimulationSettings | None = None,
) -> NDArray[np.float64]:
    """
    Optimizer q* of the instance.

    Args:
        inst: Problem data
        tol: KKT tolerance (settings.oracle_tol when None)
        warm: Starting point
        settings: Solver settings

    Returns:
        q* with KKT residual at most tol

    Raises:
        OracleConvergenceError: On hitting the iteration cap
    """
    settings = settings or SimulationSettings()
    if tol is not None:
        settings = settings.model_copy(update={"oracle_tol": tol})
    solver = BoxQpSolver.for_instance(inst, settings)
    q, residual, iterations = solver.solve(
        inst.vbar - inst.mu, inst.limits.lower, inst.limits.upper, warm
    )
    logger.debug("box_qp_solved", residual=residual, iterations=iterations)
    return q


def solve_box_qp_exhaustive(inst: QpInstance, tol: float = 1e-10) -> NDArray[np.float64]:
    """
    Optimizer by enumerating all 3ᴺ bound patterns.

    Each pattern fixes some coordinates at a bound and solves the equality
    constrained problem on the rest; patterns whose solution is infeasible
    or has wrong-signed bound multipliers are discarded, and the best
    surviving objective wins. Only for small N.

    Raises:
        OracleError: If N is too large or no pattern survives
    """
    n = inst.n
    if n > EXHAUSTIVE_MAX_N:
        raise OracleError(f"Exhaustive search is limited to N <= {EXHAUSTIVE_MAX_N}, got {n}")

    X = inst.X
    c = inst.vbar - inst.mu
    lower, upper = inst.limits.lower, inst.limits.upper
    best: NDArray[np.float64] | None = None
    best_value = np.inf

    for pattern in itertools.product((-1, 0, 1), repeat=n):
        state = np.array(pattern)
        free = state == 0
        q = np.where(state < 0, lower, upper).astype(np.float64)
        if free.any():
            rhs = -(c[free] + X[np.ix_(free, ~free)] @ q[~free])
            q[free] = linalg.solve(X[np.ix_(free, free)], rhs, assume_a="pos")
        if np.any(q < lower - tol) or np.any(q > upper + tol):
            continue
        g = X @ q + c
        if np.any(g[state < 0] < -tol) or np.any(g[state > 0] > tol):
            continue
        value = 0.5 * float(q @ X @ q) + float(c @ q)
        if value < best_value:
            best, best_value = q, value

    if best is None:
        raise OracleError("No bound pattern satisfies the optimality conditions")
    return np.minimum(np.maximum(best, lower), upper)


# =============================================================================
# Tracking bounds
# =============================================================================


def default_beta_prime(bp: BoundParams) -> float:
    """β′ = εCM/(C + M − 2εCM); infinite when ε = 2/(C+M)."""
    a = bp.epsilon * bp.c_min * bp.m_lip
    denom = bp.c_min + bp.m_lip - 2.0 * a
    return a / denom if denom > 0 else np.inf


def contraction_factor(bp: BoundParams) -> tuple[float, float]:
    """
    Contraction factor ρ and drift term Θ of the tracking bound.

    With the default β′ these reduce to ρ = 1 − εCM/(C+M) and
    Θ = (C + M − εCM)/(εCM)·B₂, which stay finite at ε = 2/(C+M).

    Raises:
        BoundConfigurationError: If ε > 2/(C+M) or ρ lies outside (0, 1)
    """
    s = bp.c_min + bp.m_lip
    a = bp.epsilon * bp.c_min * bp.m_lip
    if bp.epsilon > 2.0 / s * (1 + 1e-12):
        raise BoundConfigurationError(
            f"epsilon={bp.epsilon:.6g} exceeds 2/(C+M)={2.0 / s:.6g}",
            epsilon=bp.epsilon,
            beta_prime=bp.beta_prime,
            rho=np.nan,
        )

    if bp.beta_prime is None:
        rho = 1.0 - a / s
        theta = (s - a) / a * bp.b2
    else:
        rho = (1.0 + bp.beta_prime) * (1.0 - 2.0 * a / s)
        theta = (1.0 + 1.0 / bp.beta_prime) * bp.b2

    if not 0.0 < rho < 1.0:
        raise BoundConfigurationError(
            f"Contraction factor rho={rho:.6g} not in (0, 1) for "
            f"epsilon={bp.epsilon:.6g}, beta_prime={bp.beta_prime}",
            epsilon=bp.epsilon,
            beta_prime=bp.beta_prime,
            rho=rho,
        )
    return rho, theta


def tracking_bound(
    bp: BoundParams,
    initial_err: float,
    k: int | NDArray[np.int64],
) -> float | NDArray[np.float64]:
    """
    Bound on ‖q_k − q*_k‖²_{D⁻¹}: ρᵏ·e₀ + (1 − ρᵏ)/(1 − ρ)·Θ.

    Args:
        bp: Bound parameters
        initial_err: ‖q₀ − q*₀‖²_{D⁻¹}
        k: Step index or array of indices

    Raises:
        BoundConfigurationError: If ρ is not in (0, 1)
    """
    rho, theta = contraction_factor(bp)
    rho_k = np.power(rho, k)
    return rho_k * initial_err + (1.0 - rho_k) / (1.0 - rho) * theta


def steady_state_bound(bp: BoundParams) -> float:
    """
    Limit of the tracking bound as k → ∞, Θ/(1 − ρ).

    With the default β′ this is (C+M)(C+M−εCM)/(εCM)²·B₂.
    """
    rho, theta = contraction_factor(bp)
    if bp.beta_prime is None:
        s = bp.c_min + bp.m_lip
        a = bp.epsilon * bp.c_min * bp.m_lip
        return s * (s - a) / a**2 * bp.b2
    return theta / (1.0 - rho)


def estimate_B2(trace: NDArray[np.float64], d: NDArray[np.float64]) -> B2Estimate:
    """
    Empirical optimizer drift from a horizon×N trace of q*.

    Args:
        trace: Optimizers q*_0..q*_{H−1}
        d: Diagonal of D

    Returns:
        Max and mean of ‖q*_{k+1} − q*_k‖²_{D⁻¹}

    Raises:
        OracleError: If the trace has fewer than two steps
    """
    trace = np.asarray(trace, dtype=np.float64)
    if trace.ndim != 2 or trace.shape[0] < 2:
        raise OracleError("Drift estimation needs at least two optimizers")
    drift = np.sum(np.diff(trace, axis=0) ** 2 / d, axis=1)
    return B2Estimate(
        max_drift=float(np.max(drift)),
        mean_drift=float(np.mean(drift)),
        samples=int(drift.shape[0]),
    )
