"""Simulation harness: configuration, scenarios, closed-loop runs, metrics and the CLI."""

from .config import Config, ConfigError, load_config
from .scenarios import Scenario, build_scenario
from .sim import PlanCache, RunAborted, RunLog, run_closed_loop

__all__ = ["Config", "ConfigError", "load_config", "Scenario", "build_scenario", "PlanCache", "RunAborted",
           "RunLog", "run_closed_loop"]
