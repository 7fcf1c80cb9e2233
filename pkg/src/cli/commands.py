"""
CLI commands for the volt/VAR control simulator.

Provides commands to validate scenarios, run ensembles, sweep a
scenario parameter and plot results, with rich tables on stdout and
structured logs on stderr.

Exit codes: 0 ok, 1 invalid scenario, 2 runtime failure.
"""

import asyncio
import time
from collections.abc import Callable
from functools import wraps
from pathlib import Path
from typing import Any

import click
import structlog
from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from src import __version__
from src.config.logging import configure_logging
from src.config.settings import get_settings
from src.models.results import (
    BoundReport,
    EnsembleResult,
    ResolvedParameters,
    RunManifest,
    SweepRow,
)
from src.repositories.results_repository import ResultsRepository
from src.repositories.scenario_repository import (
    ManifestMismatchError,
    ScenarioError,
    ScenarioRepository,
    ScenarioSchemaError,
)
from src.services.analysis_service import steady_state
from src.services.control_service import ControlError
from src.services.dynamics_service import DynamicsError
from src.services.harness_service import (
    HarnessService,
    PreparedRun,
    StabilityError,
)
from src.services.network_service import NetworkError
from src.services.oracle_service import BoundConfigurationError
from src.services.plot_service import X_AXES, plot_traces
from src.services.scheduler_service import SchedulerError

console = Console()
logger = structlog.get_logger(__name__)

EXIT_INVALID = 1
EXIT_RUNTIME = 2

# Errors raised while a scenario is loaded and prepared, before anything runs
INVALID_SCENARIO_ERRORS: tuple[type[Exception], ...] = (
    ScenarioError,
    NetworkError,
    SchedulerError,
    DynamicsError,
    ControlError,
    StabilityError,
)


def async_command(f: Callable) -> Callable:
    """Decorator to run async functions in Click commands."""

    @wraps(f)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        return asyncio.run(f(*args, **kwargs))

    return wrapper


def handle_errors(f: Callable) -> Callable:
    """Decorator mapping domain errors to messages and exit codes."""

    @wraps(f)
    async def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return await f(*args, **kwargs)
        except ScenarioSchemaError as e:
            console.print("[red]Invalid scenario:[/red]")
            for pointer, message in e.errors:
                console.print(f"  [cyan]{pointer or '/'}[/cyan] {message}")
            raise click.exceptions.Exit(EXIT_INVALID) from e
        except INVALID_SCENARIO_ERRORS as e:
            console.print(f"[red]Invalid scenario:[/red] {e}")
            raise click.exceptions.Exit(EXIT_INVALID) from e
        except (click.exceptions.Exit, click.ClickException):
            raise
        except Exception as e:
            logger.exception("command_failed")
            console.print(f"[red]Run failed:[/red] {e}")
            raise click.exceptions.Exit(EXIT_RUNTIME) from e

    return wrapper


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.6g}"


def resolved_table(resolved: ResolvedParameters, title: str) -> Table:
    """Step-size and stability numbers of a prepared scenario."""
    table = Table(title=title, box=box.ROUNDED)
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", justify="right", style="green")

    table.add_row("N", str(resolved.n))
    table.add_row("C", _fmt(resolved.c_min))
    table.add_row("M_lip", _fmt(resolved.m_lip))
    table.add_row("2/M", _fmt(resolved.sync_bound))
    table.add_row("2/(C+M)", _fmt(resolved.dynamic_bound))
    table.add_row("classical async", _fmt(resolved.classical_bound))
    table.add_row(f"epsilon ({resolved.epsilon_rule})", _fmt(resolved.epsilon))
    table.add_row("spectral radius", _fmt(resolved.spectral_radius))
    table.add_row("bound rho", _fmt(resolved.bound_rho))
    return table


def report_table(result: EnsembleResult, report: BoundReport | None) -> Table:
    """Ensemble outcome and its comparison with the tracking bound."""
    table = Table(title="Tracking Bound", box=box.ROUNDED)
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", justify="right", style="green")

    table.add_row("realizations", str(result.realizations))
    table.add_row("B2 (max)", _fmt(result.b2.max_drift))
    table.add_row("B2 (mean)", _fmt(result.b2.mean_drift))
    table.add_row("steady mismatch", _fmt(steady_state(result.mean["mismatch_l2"])))
    if report is None:
        table.add_row("bound", "undefined for this step-size")
        return table
    table.add_row("B1", _fmt(report.b1))
    table.add_row("B2/B1", _fmt(report.b2_b1_ratio))
    table.add_row("steady tracking", _fmt(report.steady_state_empirical))
    table.add_row("steady bound", _fmt(report.steady_state_bound))
    table.add_row("ratio", _fmt(report.ratio))
    table.add_row("bound holds", "[green]yes[/green]" if report.holds else "[red]no[/red]")
    return table


def _bound_report(
    harness: HarnessService, result: EnsembleResult, prepared: PreparedRun
) -> BoundReport | None:
    try:
        return harness.compare_bound(result, prepared)
    except BoundConfigurationError as e:
        logger.warning("bound_undefined", error=str(e))
        return None


async def execute_run(
    repo: ScenarioRepository,
    results: ResultsRepository,
    harness: HarnessService,
    scenario_path: Path,
    overrides: list[str],
    name: str,
    workers: int | None = None,
    master_seed: int | None = None,
) -> tuple[RunManifest, EnsembleResult, BoundReport | None]:
    """
    Load, prepare, run and persist one ensemble.

    Returns:
        The written manifest, the ensemble result and its bound report
    """
    started = time.perf_counter()
    scenario = repo.load(scenario_path, overrides)
    prepared = harness.prepare(scenario, repo.schedule_sets(scenario, scenario_path))
    seed = scenario.master_seed if master_seed is None else master_seed

    result = await harness.run_ensemble(prepared, master_seed=seed, workers=workers)
    report = _bound_report(harness, result, prepared)

    csv_path = results.write_ensemble_csv(name, result)
    sidecar_path = results.write_sidecar(name, repo.hash(scenario_path), prepared.resolved, result)
    manifest = RunManifest(
        scenario_path=str(scenario_path),
        scenario_hash=repo.hash(scenario_path),
        overrides=list(overrides),
        resolved=prepared.resolved,
        outputs={"csv": str(csv_path), "sidecar": str(sidecar_path)},
        master_seed=seed,
        seeds=result.seeds,
        workers=workers or harness.settings.workers,
        wall_clock_s=round(time.perf_counter() - started, 6),
        version=__version__,
        extra={
            "name": name,
            "realizations": scenario.realizations,
            "horizon": scenario.horizon,
            "physics": scenario.physics.value,
            "mode": scenario.mode.value,
            "diverged": result.diverged,
            "bound_holds": None if report is None else report.holds,
        },
    )
    manifest_path = results.write_manifest(name, manifest)
    manifest = manifest.model_copy(
        update={"outputs": {**manifest.outputs, "manifest": str(manifest_path)}}
    )
    return manifest, result, report


# =============================================================================
# Main CLI Group
# =============================================================================


@click.group()
@click.version_option(version=__version__, prog_name="voltctl")
@click.option("--log-level", default=None, help="Override APP_LOG_LEVEL")
def cli(log_level: str | None) -> None:
    """voltctl - decentralized volt/VAR control simulator.

    Validate scenarios, run ensembles and sweep parameters.
    """
    app = get_settings().app
    configure_logging(log_level or app.log_level, app.log_format)


# =============================================================================
# Commands
# =============================================================================


@cli.command("validate")
@click.argument("scenario_file", type=click.Path(path_type=Path))
@async_command
@handle_errors
async def validate(scenario_file: Path) -> None:
    """Check a scenario and print its step-size bounds."""
    repo = ScenarioRepository()
    harness = HarnessService(get_settings().simulation)

    scenario = repo.load(scenario_file)
    prepared = harness.prepare(scenario, repo.schedule_sets(scenario, scenario_file))
    resolved = prepared.resolved

    console.print(resolved_table(resolved, f"Scenario: {scenario.name}"))
    if not resolved.stable:
        console.print(
            f"[yellow]Warning:[/yellow] spectral radius {resolved.spectral_radius:.6g} >= 1; "
            "the run will diverge"
        )
    if resolved.bound_rho is None:
        console.print("[yellow]Warning:[/yellow] tracking bound undefined for this step-size")
    console.print(
        Panel(
            f"[green]Valid[/green]\nHash: {repo.hash(scenario_file)}",
            title="Validation",
            border_style="green",
        )
    )


@cli.command("run")
@click.argument("scenario_file", required=False, type=click.Path(path_type=Path))
@click.option("--override", "-o", "overrides", multiple=True, help="Dotted key=value override")
@click.option("--out", "out_dir", default=None, type=click.Path(path_type=Path), help="Output dir")
@click.option("--name", default=None, help="Output file stem (default: scenario file stem)")
@click.option("--workers", "-w", default=None, type=int, help="Override VOLTCTL_WORKERS")
@click.option(
    "--manifest",
    "manifest_file",
    default=None,
    type=click.Path(path_type=Path),
    help="Re-run from a manifest",
)
@async_command
@handle_errors
async def run(
    scenario_file: Path | None,
    overrides: tuple[str, ...],
    out_dir: Path | None,
    name: str | None,
    workers: int | None,
    manifest_file: Path | None,
) -> None:
    """Run an ensemble and write its CSV, sidecar and manifest."""
    settings = get_settings().simulation
    repo = ScenarioRepository()
    results = ResultsRepository(out_dir or settings.output_dir)
    harness = HarnessService(settings)

    override_list = list(overrides)
    master_seed = None
    if manifest_file is not None:
        replay = results.read_manifest(manifest_file)
        scenario_file = Path(replay.scenario_path)
        if repo.hash(scenario_file) != replay.scenario_hash:
            raise ManifestMismatchError(
                f"{scenario_file} hash {repo.hash(scenario_file)} does not match "
                f"manifest hash {replay.scenario_hash}"
            )
        override_list = list(replay.overrides) + override_list
        master_seed = replay.master_seed
        name = name or replay.extra.get("name")
    if scenario_file is None:
        raise click.UsageError("Give a scenario file or --manifest")

    manifest, result, report = await execute_run(
        repo,
        results,
        harness,
        scenario_file,
        override_list,
        name or scenario_file.stem,
        workers=workers,
        master_seed=master_seed,
    )

    console.print(resolved_table(manifest.resolved, f"Run: {manifest.extra['name']}"))
    console.print(report_table(result, report))
    if result.diverged:
        console.print("[yellow]Warning:[/yellow] some realizations diverged")
    console.print_json(manifest.model_dump_json(by_alias=True))


@cli.command("sweep")
@click.argument("scenario_file", type=click.Path(path_type=Path))
@click.option("--param", "-p", required=True, help="Dotted key to vary, e.g. dynamics.alpha")
@click.option("--values", "-v", "values", required=True, help="Comma-separated grid values")
@click.option("--override", "-o", "overrides", multiple=True, help="Fixed key=value override")
@click.option("--out", "out_dir", default=None, type=click.Path(path_type=Path), help="Output dir")
@click.option("--workers", "-w", default=None, type=int, help="Override VOLTCTL_WORKERS")
@async_command
@handle_errors
async def sweep(
    scenario_file: Path,
    param: str,
    values: str,
    overrides: tuple[str, ...],
    out_dir: Path | None,
    workers: int | None,
) -> None:
    """Run one ensemble per grid value and write a summary CSV."""
    settings = get_settings().simulation
    repo = ScenarioRepository()
    harness = HarnessService(settings)
    root = Path(out_dir or settings.output_dir)

    # The base scenario must be valid on its own
    repo.load(scenario_file, list(overrides))
    grid = [value.strip() for value in values.split(",") if value.strip()]
    if not grid:
        raise click.UsageError("--values is empty")

    rows: list[SweepRow] = []
    for value in grid:
        point = f"{param}={value}"
        results = ResultsRepository(root / point.replace("/", "_"))
        try:
            _, result, report = await execute_run(
                repo,
                results,
                harness,
                scenario_file,
                [*overrides, point],
                scenario_file.stem,
                workers=workers,
            )
        except Exception as e:
            logger.warning("sweep_point_failed", param=param, value=value, error=str(e))
            rows.append(SweepRow(param_value=value, error=str(e)))
            continue
        rows.append(
            SweepRow(
                param_value=value,
                steady_state_mismatch=steady_state(result.mean["mismatch_l2"]),
                steady_state_tracking=steady_state(result.mean["tracking_err_weighted"]),
                bound=float("nan") if report is None else report.steady_state_bound,
                ratio=float("nan") if report is None else report.ratio,
            )
        )

    summary = ResultsRepository(root).write_summary(
        rows, extra={"param": param, "scenario": str(scenario_file)}
    )

    table = Table(title=f"Sweep over {param}", box=box.ROUNDED)
    table.add_column("Value", style="cyan")
    table.add_column("Mismatch", justify="right")
    table.add_column("Tracking", justify="right")
    table.add_column("Bound", justify="right")
    table.add_column("Ratio", justify="right", style="green")
    for row in rows:
        if row.error is not None:
            table.add_row(row.param_value, "[red]failed[/red]", "", "", "")
            continue
        table.add_row(
            row.param_value,
            _fmt(row.steady_state_mismatch),
            _fmt(row.steady_state_tracking),
            _fmt(row.bound),
            _fmt(row.ratio),
        )
    console.print(table)
    console.print(f"Summary: {summary}")


@cli.command("plot")
@click.argument("csv_files", nargs=-1, required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_file", required=True, type=click.Path(path_type=Path), help="Image")
@click.option("--column", "-c", default="mismatch_l2", help="CSV column to draw")
@click.option("--x", "x_axis", type=click.Choice(X_AXES), default="step", help="Horizontal axis")
@click.option("--linear", is_flag=True, help="Linear instead of log y axis")
@click.option("--bound", "with_bound", is_flag=True, help="Overlay the bound column")
@async_command
@handle_errors
async def plot(
    csv_files: tuple[Path, ...],
    out_file: Path,
    column: str,
    x_axis: str,
    linear: bool,
    with_bound: bool,
) -> None:
    """Draw ensemble CSVs, e.g. duty cycles against cumulative updates."""
    path = plot_traces(
        list(csv_files), out_file, column=column, x=x_axis, log_y=not linear, with_bound=with_bound
    )
    console.print(f"Figure: {path}")


if __name__ == "__main__":
    cli()
