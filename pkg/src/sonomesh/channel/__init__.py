"""Acoustic channel model, scenario files and the discrete-event simulator."""

from .model import ChannelModel, attenuation_db, propagate
from .scenario import (
    LinkSpec,
    NodeSpec,
    Scenario,
    ScenarioError,
    TrafficSpec,
    load_scenario,
    scenario_from_dict,
)
from .simulator import (
    EventTrace,
    SimResult,
    Simulator,
    guard_penalty_db,
    make_wav_dumper,
    run_scenario,
)

__all__ = [
    "ChannelModel",
    "EventTrace",
    "LinkSpec",
    "NodeSpec",
    "Scenario",
    "ScenarioError",
    "SimResult",
    "Simulator",
    "TrafficSpec",
    "attenuation_db",
    "guard_penalty_db",
    "load_scenario",
    "make_wav_dumper",
    "propagate",
    "run_scenario",
    "scenario_from_dict",
]
