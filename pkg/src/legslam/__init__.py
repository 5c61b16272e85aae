"""Dual-lane pose graph fusion of LiDAR and leg odometry for elevation drift."""

from .geometry import Pose3, between, compose, exp, inverse, log
from .lanes import VARIANTS, LaneConfig, build_graph, extract_output_trajectory
from .sim import PRESETS, ScenarioSpec, SensorNoiseSpec, preset, simulate
from .solver import Graph, SolverSettings, incremental_update, optimize

__version__ = "0.1.0"

__all__ = [
    "Pose3", "between", "compose", "exp", "inverse", "log",
    "VARIANTS", "LaneConfig", "build_graph", "extract_output_trajectory",
    "PRESETS", "ScenarioSpec", "SensorNoiseSpec", "preset", "simulate",
    "Graph", "SolverSettings", "incremental_update", "optimize",
]
