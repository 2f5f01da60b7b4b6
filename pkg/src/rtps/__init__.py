"""Receiver-side transport for popularity-weighted bandwidth sharing.

The package combines a receiver-side rate allocator driven by the social
popularity of senders, a delayed-ACK / advertised-window engine, a small
discrete-event multi-hop network simulator and an experiment harness.
"""

from .drcm import RateAllocation, compute_desired_rates, recompute_with_cap
from .errors import ConfigError, ScenarioError, SimulationError
from .experiments import MetricsReport, emit_outputs, run_scenario, sweep
from .pfaocm import WindowEngine, WindowParams, WindowState, compute_factor
from .scenario import Scenario, load_scenario, parse_scenario
from .social import build_graph, degree_centrality, popularity_profile

__all__ = [
    "ConfigError", "MetricsReport", "RateAllocation", "Scenario", "ScenarioError",
    "SimulationError", "WindowEngine", "WindowParams", "WindowState", "build_graph",
    "compute_desired_rates", "compute_factor", "degree_centrality", "emit_outputs",
    "load_scenario", "parse_scenario", "popularity_profile", "recompute_with_cap",
    "run_scenario", "sweep",
]
