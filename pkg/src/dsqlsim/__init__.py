"""Simulator for Q-learning data scheduling in vehicular social networks."""

from .config import ConfigError, ScenarioConfig, load_config, parse_config
from .engine import SCHEDULERS, RunResult, Simulation, run
from .metrics import MetricsReport

__all__ = ["ConfigError", "ScenarioConfig", "load_config", "parse_config", "SCHEDULERS",
           "RunResult", "Simulation", "run", "MetricsReport"]
__version__ = "0.1.0"
