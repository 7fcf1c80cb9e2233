"""Command-line interface: `voltctl validate | run | sweep | plot`."""

from src.cli.commands import cli

__all__ = ["cli"]
