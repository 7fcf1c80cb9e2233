"""
Figures from ensemble CSVs.

matplotlib is an optional extra (`pip install voltctl[plot]`); it is
imported on first use so the rest of the package works without it.
"""

from pathlib import Path

import structlog

from src.models.results import CSV_COLUMNS
from src.repositories.results_repository import read_ensemble_csv

logger = structlog.get_logger(__name__)

X_AXES = ("step", "updates")


class PlotError(Exception):
    """Raised when a figure cannot be produced."""

    pass


def _pyplot():
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as e:
        raise PlotError("Plotting needs matplotlib: pip install 'voltctl[plot]'") from e
    return plt


def plot_traces(
    csv_files: list[Path],
    out: Path,
    column: str = "mismatch_l2",
    x: str = "step",
    log_y: bool = True,
    with_bound: bool = False,
) -> Path:
    """
    Draw one column of several ensemble CSVs on shared axes.

    Args:
        csv_files: Ensemble CSVs; each becomes a line labelled by file stem
        out: Image path, format from its suffix
        column: CSV column on the y axis
        x: "step", or "updates" for cumulative bus updates
        log_y: Logarithmic y axis
        with_bound: Also draw each file's bound column, dashed

    Raises:
        PlotError: Unknown column or axis, or matplotlib missing
    """
    if column not in CSV_COLUMNS or column == "step":
        raise PlotError(f"Unknown column {column!r}; choose from {', '.join(CSV_COLUMNS[1:])}")
    if x not in X_AXES:
        raise PlotError(f"Unknown x axis {x!r}; choose from {', '.join(X_AXES)}")
    plt = _pyplot()

    fig, ax = plt.subplots(figsize=(8, 5))
    for path in csv_files:
        frame = read_ensemble_csv(path)
        xs = frame["step"] if x == "step" else frame["cum_updates"]
        (line,) = ax.plot(xs, frame[column], label=Path(path).stem)
        if with_bound:
            ax.plot(xs, frame["bound"], linestyle="--", color=line.get_color())

    if log_y:
        ax.set_yscale("log")
    ax.set_xlabel("step" if x == "step" else "cumulative bus updates")
    ax.set_ylabel(column)
    ax.legend(loc="best")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()

    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out)
    plt.close(fig)
    logger.info("figure_written", path=str(out), files=len(csv_files), column=column, x=x)
    return out
