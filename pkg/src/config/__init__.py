"""Configuration module for the voltage control simulator."""

from src.config.logging import configure_logging
from src.config.settings import AppSettings, Settings, SimulationSettings, get_settings

__all__ = ["AppSettings", "Settings", "SimulationSettings", "configure_logging", "get_settings"]
