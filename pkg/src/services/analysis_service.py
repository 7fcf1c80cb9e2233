"""Post-processing of traces: steady states, convergence speed, curve comparison."""

import math

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import trapezoid

DEFAULT_GRID_POINTS = 512


def steady_state(series: NDArray[np.float64], fraction: float = 0.25) -> float:
    """Mean over the final fraction of the series (at least one sample)."""
    series = np.asarray(series, dtype=np.float64)
    if series.size == 0:
        return math.nan
    tail = max(1, math.ceil(fraction * series.size))
    return float(np.mean(series[-tail:]))


def iterations_to_tolerance(
    series: NDArray[np.float64],
    tol: float,
    relative: bool = True,
) -> int | None:
    """
    First step at which the series drops to tol.

    Args:
        series: Non-negative error trace
        tol: Threshold
        relative: Compare series[k] / series[0] instead of series[k]

    Returns:
        Step index, or None if the threshold is never reached
    """
    series = np.asarray(series, dtype=np.float64)
    scale = series[0] if relative and series[0] > 0 else 1.0
    hits = np.flatnonzero(series / scale <= tol)
    return int(hits[0]) if hits.size else None


def updates_axis_curve(
    values: NDArray[np.float64],
    cum_updates: NDArray[np.float64],
    grid: NDArray[np.float64],
) -> NDArray[np.float64]:
    """
    Resample a per-step trace onto a grid of cumulative update counts.

    Steps without updates repeat the count of the step before; only the
    first step at each count is kept.
    """
    counts, first = np.unique(np.asarray(cum_updates, dtype=np.float64), return_index=True)
    return np.interp(grid, counts, np.asarray(values, dtype=np.float64)[first])


def transient_updates(
    values: NDArray[np.float64],
    cum_updates: NDArray[np.float64],
    settled: float = 0.1,
) -> float:
    """
    Cumulative updates after which a decaying trace has settled: its excess
    over the steady state first drops to `settled` times the initial excess.
    The last count when it never does.
    """
    values = np.asarray(values, dtype=np.float64)
    cum_updates = np.asarray(cum_updates, dtype=np.float64)
    excess = values - steady_state(values)
    hits = np.flatnonzero(excess <= settled * excess[0])
    return float(cum_updates[hits[0]] if hits.size else cum_updates[-1])


def area_deviation(
    values_a: NDArray[np.float64],
    updates_a: NDArray[np.float64],
    values_b: NDArray[np.float64],
    updates_b: NDArray[np.float64],
    points: int = DEFAULT_GRID_POINTS,
    upto: float | None = None,
) -> float:
    """
    Area between two curves on the updates axis, relative to the smaller
    of their areas, over the update range both cover (capped at `upto`).
    """
    top = min(float(np.max(updates_a)), float(np.max(updates_b)))
    if upto is not None:
        top = min(top, upto)
    grid = np.linspace(0.0, top, points)
    a = updates_axis_curve(values_a, updates_a, grid)
    b = updates_axis_curve(values_b, updates_b, grid)
    between = trapezoid(np.abs(a - b), grid)
    smaller = min(trapezoid(np.abs(a), grid), trapezoid(np.abs(b), grid))
    return float(between / smaller) if smaller > 0 else math.inf


def b2_b1_ratio(b2: float, b1: float) -> float:
    """Empirical optimizer drift over nominal-voltage drift, NaN when B₁ = 0."""
    return b2 / b1 if b1 > 0 else math.nan
