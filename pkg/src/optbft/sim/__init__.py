"""Discrete-event network simulator, adversaries and schedule exploration."""

from .engine import Simulation, build_world, run
from .metrics import Metrics, Record, format_steps
from .scenario import Scenario, ScenarioError, apply_override, from_dict, load

__all__ = [
    "Metrics",
    "Record",
    "Scenario",
    "ScenarioError",
    "Simulation",
    "apply_override",
    "build_world",
    "format_steps",
    "from_dict",
    "load",
    "run",
]
