"""
Application settings using pydantic-settings.

Loads host and tooling configuration from environment variables with
validation. Per-run parameters live in scenario files, not here.
"""

from functools import lru_cache
from pathlib import Path
from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class SimulationSettings(BaseSettings):
    """Numerical and execution settings for simulations."""

    model_config = SettingsConfigDict(
        env_prefix="VOLTCTL_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    workers: int = Field(default=1, ge=1, le=256, description="Ensemble worker count")
    output_dir: Path = Field(default=Path("results"), description="Default output directory")

    # Eigen-extremes of the scaled reactance matrix
    dense_eig_limit: int = Field(
        default=512, ge=1, description="Largest N solved by dense eigendecomposition"
    )
    eig_tol: float = Field(default=1e-10, gt=0, description="Iterative eigensolver tolerance")

    # Box-QP oracle
    oracle_tol: float = Field(default=1e-12, gt=0, description="KKT residual tolerance")
    oracle_max_iter: int = Field(default=200_000, ge=1, description="Oracle iteration cap")
    oracle_active_set_iter: int = Field(
        default=50, ge=1, description="Linear solves per active-set pass"
    )
    oracle_polish_every: int = Field(
        default=25, ge=1, description="Fallback gradient steps between active-set restarts"
    )

    # Nonlinear backward/forward sweep
    sweep_tol: float = Field(default=1e-10, gt=0, description="Sweep max-norm tolerance")
    sweep_max_iter: int = Field(default=500, ge=1, description="Sweep iteration cap")

    safety_fraction: float = Field(
        default=0.5, gt=0, le=1, description="Fraction of a bound used by auto step-sizes"
    )
    bound_slack: float = Field(
        default=1e-9, ge=0, description="Relative slack when comparing errors against bounds"
    )


class AppSettings(BaseSettings):
    """Application-level settings."""

    model_config = SettingsConfigDict(
        env_prefix="APP_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    name: str = Field(default="voltctl", description="Application name")
    version: str = Field(default="0.1.0", description="Application version")
    environment: Literal["development", "staging", "production"] = Field(
        default="development",
        description="Environment name",
    )
    debug: bool = Field(default=False, description="Debug mode")
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = Field(
        default="WARNING",
        description="Logging level",
    )
    log_format: Literal["console", "json"] = Field(
        default="console",
        description="structlog renderer",
    )


class Settings(BaseSettings):
    """Main settings container."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    simulation: SimulationSettings = Field(default_factory=SimulationSettings)
    app: AppSettings = Field(default_factory=AppSettings)


@lru_cache
def get_settings() -> Settings:
    """
    Get cached settings instance.

    Uses lru_cache to ensure settings are loaded only once.
    """
    return Settings()
