"""
Pydantic models for corridor state, signal timing, plans and scenarios
"""

from .domain import (
    Corridor,
    DwellRecord,
    Grant,
    Lane,
    Movement,
    Phase,
    PlanningWindow,
    RowPlan,
    ScenarioConfig,
    SignalPlan,
    Strategy,
    VehicleClass,
    VehicleState,
    build_config,
)
from .errors import (
    CandidateLimitExceeded,
    InvariantViolation,
    RunFailure,
    ScenarioParseError,
    ScenarioRangeError,
)
from .scenario import dump_scenario, load_scenario, load_scenario_file

__all__ = [
    "Corridor",
    "DwellRecord",
    "Grant",
    "Lane",
    "Movement",
    "Phase",
    "PlanningWindow",
    "RowPlan",
    "ScenarioConfig",
    "SignalPlan",
    "Strategy",
    "VehicleClass",
    "VehicleState",
    "build_config",
    "CandidateLimitExceeded",
    "InvariantViolation",
    "RunFailure",
    "ScenarioParseError",
    "ScenarioRangeError",
    "dump_scenario",
    "load_scenario",
    "load_scenario_file",
]
