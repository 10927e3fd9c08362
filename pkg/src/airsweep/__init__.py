"""Deterministic simulator and path optimizer for a mobile classroom air filter."""
from .exposure import BreathingParams, RunResult, efficacy, risk_label, run_scenario
from .field import ConcentrationField, DiffusionParams, RoomGeometry, apply_sink, step_diffuse
from .optimize import Bounds, PathOptimizer, optimize_path
from .plume import AirParams, CoughSpec, SourceSeries, VirologyParams, generate_source_series
from .scenario import (
    ClassroomLayout,
    EmissionEvent,
    FilterPlacement,
    PathParams,
    RobotSpec,
    Scenario,
    scenario_source,
)
from ._validation import ConfigurationError

__version__ = "0.1.0"

__all__ = [
    "AirParams", "BreathingParams", "Bounds", "ClassroomLayout", "ConcentrationField",
    "ConfigurationError", "CoughSpec", "DiffusionParams", "EmissionEvent", "FilterPlacement",
    "PathOptimizer", "PathParams", "RobotSpec", "RoomGeometry", "RunResult", "Scenario",
    "SourceSeries", "VirologyParams", "apply_sink", "efficacy", "generate_source_series",
    "optimize_path", "risk_label", "run_scenario", "scenario_source", "step_diffuse",
]
