"""
voltctl - Main Entry Point

Demonstrates the simulator end to end: validates the shipped single-line
scenario, runs it, then compares synchronous and duty-cycle control on
the 21-bus feeder over a short horizon.
"""

import asyncio
import sys
from pathlib import Path

import structlog
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from src.config.logging import configure_logging
from src.config.settings import get_settings
from src.repositories.scenario_repository import ScenarioRepository
from src.services.analysis_service import iterations_to_tolerance, steady_state
from src.services.harness_service import HarnessService

SCENARIOS = Path(__file__).parent / "data" / "scenarios"

logger = structlog.get_logger(__name__)
console = Console()


async def demo_unit(repo: ScenarioRepository, harness: HarnessService) -> None:
    """Run the single-line scenario and show its numbers."""
    console.print("\n[bold cyan]Single-line network...[/bold cyan]")

    scenario = repo.load(SCENARIOS / "unit.json")
    prepared = harness.prepare(scenario)
    resolved = prepared.resolved
    console.print(
        f"  [green]✓[/green] C = {resolved.c_min:.6g}, M = {resolved.m_lip:.6g}, "
        f"epsilon = {resolved.epsilon:.6g}"
    )

    result = await harness.run_ensemble(prepared)
    final = result.mean["tracking_err_weighted"][-1]
    console.print(f"  [green]✓[/green] Final tracking error: {final:.3e}")


async def demo_schedules(repo: ScenarioRepository, harness: HarnessService) -> None:
    """Compare update schedules on the 21-bus feeder."""
    console.print("\n[bold cyan]21-bus feeder, schedule comparison...[/bold cyan]")

    table = Table(title="Schedules")
    table.add_column("Schedule", style="cyan")
    table.add_column("Updates", justify="right")
    table.add_column("Steady mismatch", justify="right", style="green")
    table.add_column("Steps to 1e-3", justify="right", style="magenta")

    variants = {
        "sync": ["schedule.mode=sync", "schedule.K=1"],
        "duty cycle 50%": ["schedule.eta=0.5"],
        "duty cycle 25%": ["schedule.eta=0.25"],
    }
    for label, overrides in variants.items():
        scenario = repo.load(SCENARIOS / "tc1.json", ["horizon=600", "realizations=2", *overrides])
        prepared = harness.prepare(scenario)
        result = await harness.run_ensemble(prepared)
        hit = iterations_to_tolerance(result.mean["tracking_err_weighted"], 1e-3)
        table.add_row(
            label,
            f"{result.mean['cum_updates'][-1]:.0f}",
            f"{steady_state(result.mean['mismatch_l2']):.4e}",
            "-" if hit is None else str(hit),
        )

    console.print(table)


async def run_demo() -> None:
    """Run the demo."""
    console.print(
        Panel.fit(
            "[bold blue]voltctl demo[/bold blue]\nGradient-projection volt/VAR control",
            border_style="blue",
        )
    )

    settings = get_settings()
    configure_logging(settings.app.log_level, settings.app.log_format)
    console.print(f"\n[dim]Environment: {settings.app.environment}[/dim]")

    repo = ScenarioRepository()
    harness = HarnessService(settings.simulation)

    await demo_unit(repo, harness)
    await demo_schedules(repo, harness)

    console.print("\n[green]Demo completed![/green]")


async def main() -> None:
    """Main entry point."""
    try:
        await run_demo()
    except KeyboardInterrupt:
        console.print("\n[yellow]Interrupted by user[/yellow]")
    except Exception as e:
        logger.exception("Application error")
        console.print(f"\n[red]Error: {e}[/red]")
        sys.exit(1)


if __name__ == "__main__":
    asyncio.run(main())
