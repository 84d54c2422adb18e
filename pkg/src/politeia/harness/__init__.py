from .config import ConfigError, ScenarioConfig, ScriptedEvent
from .report import RunReport, build_report
from .sim import RunResult, ScenarioFailure, Simulation, run_scenario

__all__ = [
    "ConfigError",
    "RunReport",
    "RunResult",
    "ScenarioConfig",
    "ScenarioFailure",
    "ScriptedEvent",
    "Simulation",
    "build_report",
    "run_scenario",
]
