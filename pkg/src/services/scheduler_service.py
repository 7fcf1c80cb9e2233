"""
Scheduler service: which buses update at which step.

Generators for synchronous, duty-cycle, adversarial and idle schedules,
a builder for user-supplied activation sets, and the bounded-delay
validator every generated schedule passes before it is returned.
"""

import math

import numpy as np
import structlog
from numpy.typing import NDArray

from src.models.schedule import Schedule, ScheduleMode, ScheduleSpec

logger = structlog.get_logger(__name__)


class SchedulerError(Exception):
    """Base exception for schedule errors."""

    pass


class BoundedDelayError(SchedulerError):
    """Raised when some bus has a window of K steps without an update."""

    def __init__(self, message: str, bus: int, window_start: int) -> None:
        super().__init__(message)
        self.bus = bus
        self.window_start = window_start


def _frozen(active: NDArray[np.bool_]) -> NDArray[np.bool_]:
    active.setflags(write=False)
    return active


def slots_per_cycle(K: int, eta: float) -> int:
    """Active slots per bus in a K/2-slot cycle, ⌈η·K/2⌉."""
    # round before ceil: 0.52 * 25 evaluates to 13.000000000000002
    return max(1, math.ceil(round(eta * (K // 2), 9)))


# =============================================================================
# Validation
# =============================================================================


def validate_bounded_delay(sched: Schedule) -> None:
    """
    Check that every bus updates at least once in every K consecutive steps.

    Schedules shorter than K have no complete window and pass. Idle
    schedules are exempt.

    Raises:
        BoundedDelayError: Naming the first offending bus and window start
    """
    if sched.mode == ScheduleMode.NONE:
        return
    K = sched.K
    if sched.horizon < K:
        return
    counts = np.zeros((sched.horizon + 1, sched.n), dtype=np.int64)
    np.cumsum(sched.active, axis=0, out=counts[1:])
    windows = counts[K:] - counts[:-K]
    empty = np.argwhere(windows == 0)
    if empty.size:
        start, bus = (int(v) for v in empty[0])
        raise BoundedDelayError(
            f"Bus {bus + 1} has no update in steps {start}..{start + K - 1} (K={K})",
            bus=bus + 1,
            window_start=start,
        )


# =============================================================================
# Generators
# =============================================================================


def synchronous_schedule(n: int, horizon: int) -> Schedule:
    """Every bus updates at every step."""
    active = np.ones((horizon, n), dtype=bool)
    return Schedule(active=_frozen(active), K=1, mode=ScheduleMode.SYNC)


def idle_schedule(n: int, horizon: int) -> Schedule:
    """No bus ever updates."""
    return Schedule(
        active=_frozen(np.zeros((horizon, n), dtype=bool)),
        K=max(1, horizon),
        mode=ScheduleMode.NONE,
    )


def duty_cycle_schedule(n: int, horizon: int, K: int, eta: float, seed: int) -> Schedule:
    """
    Randomized duty-cycle schedule.

    Time is cut into common cycles of K/2 slots. In each cycle every bus
    picks ⌈η·K/2⌉ distinct slots uniformly at random; a trailing partial
    cycle is truncated. Any K consecutive steps contain a full cycle, so
    each bus updates at least once in every window of K.

    Args:
        n: Number of buses
        horizon: Number of steps
        K: Delay bound, even and at least 2
        eta: Duty cycle in (0, 1]
        seed: PRNG seed

    Returns:
        Validated schedule

    Raises:
        SchedulerError: On invalid K or eta
    """
    if K < 2 or K % 2:
        raise SchedulerError(f"duty_cycle needs an even K >= 2, got {K}")
    if not 0.0 < eta <= 1.0:
        raise SchedulerError(f"Duty cycle must lie in (0, 1], got {eta}")

    cycle = K // 2
    picks = slots_per_cycle(K, eta)
    cycles = math.ceil(horizon / cycle)

    rng = np.random.Generator(np.random.Philox(key=seed))
    ranks = np.argsort(rng.random((cycles, n, cycle)), axis=2)
    blocks = np.zeros((cycles, n, cycle), dtype=bool)
    np.put_along_axis(blocks, ranks[:, :, :picks], True, axis=2)

    active = blocks.transpose(0, 2, 1).reshape(cycles * cycle, n)[:horizon].copy()
    sched = Schedule(active=_frozen(active), K=K, eta=eta, mode=ScheduleMode.DUTY_CYCLE)
    validate_bounded_delay(sched)
    logger.debug("duty_cycle_schedule", buses=n, horizon=horizon, K=K, eta=eta, picks=picks)
    return sched


def adversarial_schedule(n: int, horizon: int, K: int) -> Schedule:
    """
    Maximally staggered schedule: bus j updates only at steps k ≡ j (mod K).

    Consecutive updates of a bus are exactly K steps apart.
    """
    if K < 1:
        raise SchedulerError(f"K must be at least 1, got {K}")
    steps = np.arange(horizon)[:, None]
    buses = np.arange(1, n + 1)[None, :]
    active = (steps % K) == (buses % K)
    sched = Schedule(active=_frozen(active), K=K, mode=ScheduleMode.ADVERSARIAL)
    validate_bounded_delay(sched)
    return sched


def schedule_from_sets(sets: list[list[int]], n: int, horizon: int, K: int) -> Schedule:
    """
    Schedule from explicit per-step sets of 1-based bus numbers.

    Rows beyond the horizon are ignored.

    Raises:
        SchedulerError: If there are fewer rows than steps or a bus is out of range
        BoundedDelayError: If the sets violate the delay bound
    """
    if len(sets) < horizon:
        raise SchedulerError(f"Schedule lists {len(sets)} steps, horizon is {horizon}")
    active = np.zeros((horizon, n), dtype=bool)
    for k, buses in enumerate(sets[:horizon]):
        for bus in buses:
            if not 1 <= bus <= n:
                raise SchedulerError(f"Step {k} names bus {bus}, valid buses are 1..{n}")
            active[k, bus - 1] = True
    sched = Schedule(active=_frozen(active), K=K, mode=ScheduleMode.FILE)
    validate_bounded_delay(sched)
    return sched


def build_schedule(
    spec: ScheduleSpec,
    n: int,
    horizon: int,
    sets: list[list[int]] | None = None,
) -> Schedule:
    """
    Build the schedule described by a scenario block.

    Args:
        spec: Schedule block
        n: Number of buses
        horizon: Number of steps
        sets: Parsed schedule file, required in file mode
    """
    match spec.mode:
        case ScheduleMode.SYNC:
            return synchronous_schedule(n, horizon)
        case ScheduleMode.NONE:
            return idle_schedule(n, horizon)
        case ScheduleMode.DUTY_CYCLE:
            return duty_cycle_schedule(n, horizon, spec.K, spec.eta, spec.seed)
        case ScheduleMode.ADVERSARIAL:
            return adversarial_schedule(n, horizon, spec.K)
        case ScheduleMode.FILE:
            if sets is None:
                raise SchedulerError("File schedule requested but no sets were loaded")
            return schedule_from_sets(sets, n, horizon, spec.K)
    raise SchedulerError(f"Unknown schedule mode {spec.mode!r}")


# =============================================================================
# Diagnostics
# =============================================================================


def expected_updates(sched: Schedule) -> int:
    """
    Updates across the network per K/2-step cycle of a duty-cycle schedule,
    ⌈η·K/2⌉·N.

    Raises:
        SchedulerError: For schedules not generated by duty cycling
    """
    if sched.mode != ScheduleMode.DUTY_CYCLE or sched.eta is None:
        raise SchedulerError(
            f"Expected updates are defined for duty-cycle schedules, not {sched.mode.value}"
        )
    return slots_per_cycle(sched.K, sched.eta) * sched.n


def update_sets(sched: Schedule) -> list[NDArray[np.int64]]:
    """Steps at which each bus updates (one array per bus)."""
    return [np.flatnonzero(sched.active[:, j]) for j in range(sched.n)]


def max_update_gaps(sched: Schedule) -> NDArray[np.int64]:
    """
    Largest distance between consecutive updates, per bus.

    Buses with fewer than two updates report the horizon.
    """
    gaps = np.full(sched.n, sched.horizon, dtype=np.int64)
    for j, steps in enumerate(update_sets(sched)):
        if steps.size >= 2:
            gaps[j] = int(np.max(np.diff(steps)))
    return gaps
