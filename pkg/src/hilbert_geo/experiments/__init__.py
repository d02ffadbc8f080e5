"""Scenario runner, dimension sweeps and report emission."""

from .config import SCENARIOS, ScenarioConfig, build_config, load_config, parse_config
from .report import CSV_HEADER, Row, SweepResult, emit_report
from .scenarios import SCENARIO_TABLE, run_scenario, sweep_dimension

__all__ = ["SCENARIOS", "SCENARIO_TABLE", "CSV_HEADER", "Row", "ScenarioConfig", "SweepResult",
           "build_config", "emit_report", "load_config", "parse_config", "run_scenario",
           "sweep_dimension"]
