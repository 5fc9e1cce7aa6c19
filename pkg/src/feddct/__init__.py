"""Virtual-time simulator for dynamic cross-tier federated learning."""

from .core import ConfigError, SimConfig, Strategy, load_config, validate
from .engine import RoundReport, SimOptions, simulate

__all__ = ["ConfigError", "RoundReport", "SimConfig", "SimOptions", "Strategy", "load_config", "simulate", "validate"]
