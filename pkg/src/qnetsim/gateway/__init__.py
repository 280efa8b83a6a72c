"""Operator surface: scenario files, headless runs, results persistence,
and the HTTP/JSON API the portal consumes."""

from .scenario import (
    Scenario,
    ScenarioError,
    build_scenario_system,
    load_model_params,
    load_scenario,
    load_scenario_file,
)
from .results import ResultRecord, read_results, summarize, write_results
from .runner import run_scenario, sweep_coexistence
from .api import GatewayServer, LiveSession

__all__ = [
    "Scenario", "ScenarioError", "build_scenario_system",
    "load_model_params", "load_scenario", "load_scenario_file",
    "ResultRecord", "read_results", "summarize", "write_results",
    "run_scenario", "sweep_coexistence",
    "GatewayServer", "LiveSession",
]
