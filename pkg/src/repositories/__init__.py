"""
Repository layer for file persistence.

Scenario files come in through ScenarioRepository; traces, sidecars,
manifests and sweep summaries go out through ResultsRepository.
"""

from src.repositories.base import BaseRepository, JsonRepository
from src.repositories.results_repository import ResultsRepository
from src.repositories.scenario_repository import (
    ManifestMismatchError,
    ScenarioError,
    ScenarioNotFoundError,
    ScenarioRepository,
    ScenarioSchemaError,
)

__all__ = [
    "BaseRepository",
    "JsonRepository",
    "ScenarioRepository",
    "ResultsRepository",
    # Errors
    "ScenarioError",
    "ScenarioSchemaError",
    "ScenarioNotFoundError",
    "ManifestMismatchError",
]
