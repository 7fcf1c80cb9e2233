"""
Pytest configuration and fixtures for testing.

Provides settings and service fixtures, network and scenario factories,
and helpers for writing scenario files to a temporary directory.
"""

import copy
import json
from pathlib import Path
from typing import Any, Callable

import numpy as np
import pytest
import pytest_asyncio

from src.config.settings import SimulationSettings
from src.models.network import RadialNetwork
from src.models.scenario import Scenario
from src.models.results import EnsembleResult
from src.services.harness_service import HarnessService, PreparedRun
from src.services.network_service import chain_network

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "data" / "scenarios"

# Per-unit impedance of the shipped 21-bus feeder lines
FEEDER_R = 0.013464
FEEDER_X = 0.021149


# =============================================================================
# Settings and Service Fixtures
# =============================================================================


@pytest.fixture
def settings() -> SimulationSettings:
    """Default simulation settings, independent of the environment."""
    return SimulationSettings(_env_file=None)


@pytest.fixture
def harness(settings: SimulationSettings) -> HarnessService:
    """HarnessService with default settings."""
    return HarnessService(settings)


@pytest.fixture
def scenario_dir() -> Path:
    """Directory of the shipped scenario gallery."""
    return SCENARIO_DIR


# =============================================================================
# Factory Fixtures
# =============================================================================


class NetworkFactory:
    """Factory for radial test networks."""

    @classmethod
    def chain(cls, n: int, r: float = FEEDER_R, x: float = FEEDER_X) -> RadialNetwork:
        """Feeder 0-1-…-n with identical lines."""
        return chain_network(n, r, x)

    @classmethod
    def random_tree(cls, rng: np.random.Generator, n: int) -> RadialNetwork:
        """
        Random tree on buses 0..n: bus j hangs off a uniformly chosen earlier
        bus, with random impedances. Lines are listed in shuffled order.
        """
        lines = [
            {
                "from": int(rng.integers(0, j)),
                "to": j,
                "r": float(rng.uniform(0.005, 0.03)),
                "x": float(rng.uniform(0.01, 0.05)),
            }
            for j in range(1, n + 1)
        ]
        order = rng.permutation(n)
        return RadialNetwork(buses=n + 1, lines=[lines[i] for i in order])

    @classmethod
    def chain_lines(cls, n: int, r: float = FEEDER_R, x: float = FEEDER_X) -> list[dict]:
        """Line records of a chain, for scenario dictionaries."""
        return [{"from": j, "to": j + 1, "r": r, "x": x} for j in range(n)]


class ScenarioFactory:
    """Factory for scenario dictionaries and models."""

    @classmethod
    def data(
        cls,
        n: int = 4,
        horizon: int = 50,
        realizations: int = 2,
        **updates: Any,
    ) -> dict[str, Any]:
        """
        Scenario dictionary on an n-bus chain.

        Keyword updates replace top-level blocks; nested blocks are merged
        one level deep.
        """
        data: dict[str, Any] = {
            "name": f"chain{n}",
            "topology": {"buses": n + 1, "lines": NetworkFactory.chain_lines(n)},
            "controller": {"epsilon": "auto_sync", "scaling": "newton_diag", "mu": "flat"},
            "dynamics": {
                "alpha": 0.3,
                "sigma2": 1e-6,
                "mean_profile": "feeder_ramp",
                "seed": 3,
                "limits": {"lower": -0.1, "upper": 0.1},
            },
            "schedule": {"mode": "sync"},
            "horizon": horizon,
            "realizations": realizations,
            "master_seed": 42,
        }
        for key, value in updates.items():
            if isinstance(value, dict) and isinstance(data.get(key), dict):
                data[key] = {**data[key], **value}
            else:
                data[key] = value
        return copy.deepcopy(data)

    @classmethod
    def create(cls, **kwargs: Any) -> Scenario:
        """Validated Scenario built from data()."""
        return Scenario.model_validate(cls.data(**kwargs))


@pytest.fixture
def network_factory() -> type[NetworkFactory]:
    """Provide NetworkFactory class."""
    return NetworkFactory


@pytest.fixture
def scenario_factory() -> type[ScenarioFactory]:
    """Provide ScenarioFactory class."""
    return ScenarioFactory


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for property loops."""
    return np.random.default_rng(20240611)


# =============================================================================
# Helper Fixtures
# =============================================================================


@pytest.fixture
def write_scenario(tmp_path: Path) -> Callable[..., Path]:
    """
    Fixture writing a scenario dictionary to a JSON file.

    Usage:
        def test_something(write_scenario, scenario_factory):
            path = write_scenario(scenario_factory.data(), "s.json")
    """

    def _write(data: dict[str, Any], name: str = "scenario.json") -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(data, indent=2), encoding="utf-8")
        return path

    return _write


@pytest.fixture
def small_prepared(harness: HarnessService, scenario_factory: type[ScenarioFactory]) -> PreparedRun:
    """Prepared three-bus chain with a short horizon."""
    return harness.prepare(scenario_factory.create(n=3, horizon=12, realizations=3))


@pytest_asyncio.fixture
async def small_ensemble(
    harness: HarnessService, small_prepared: PreparedRun
) -> tuple[PreparedRun, EnsembleResult]:
    """Ensemble result of small_prepared."""
    result = await harness.run_ensemble(small_prepared)
    return small_prepared, result
