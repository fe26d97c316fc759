"""Multi-spacecraft servicing simulation toolkit.

A deterministic closed-loop simulator and analysis library for a swarm of
servicer spacecraft regulating to a defunct target under partial relative
position feedback: communication-topology and trackability analysis,
relative orbital dynamics in two cross-validated coordinate forms, online
weight-adapting network controllers with a derivative-free velocity filter
and distributed observer, gain-feasibility closed forms, and a seeded
scenario engine with CSV/JSON artifacts.
"""

__version__ = "0.1.0"

from .agents import Gains
from .dnn import Architecture
from .engine import (RunResult, TrajectoryLog, initialize_scenario, run_many,
                     run_scenario, summarize_metrics)
from .scenario import (ScenarioConfig, config_hash, load_config, paper_scenario,
                       validate_config)
from .stability import BoundEstimates, GainReport, build_gain_report, envelope
from .topology import (Graph, SensingModel, analyze_topology, build_laplacian,
                       check_trackability, ring_graph)

__all__ = [
    "__version__",
    "Gains",
    "Architecture",
    "RunResult",
    "TrajectoryLog",
    "initialize_scenario",
    "run_many",
    "run_scenario",
    "summarize_metrics",
    "ScenarioConfig",
    "config_hash",
    "load_config",
    "paper_scenario",
    "validate_config",
    "BoundEstimates",
    "GainReport",
    "build_gain_report",
    "envelope",
    "Graph",
    "SensingModel",
    "analyze_topology",
    "build_laplacian",
    "check_trackability",
    "ring_graph",
]
