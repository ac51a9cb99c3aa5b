"""Elevator selection and cycle-level simulation for partially connected 3D NoCs."""

from .engine import AdeleParams, EnergyModel, SimConfig, SimMetrics, latency_sweep, load_distribution, simulate
from .optimizer import AmosaConfig, amosa_optimize, optimize_placement, pick_solution
from .selection import ElevatorAssignment
from .topology import Topology, build_topology, load_topology
from .traffic import TrafficSource

__all__ = [
    "AdeleParams", "AmosaConfig", "ElevatorAssignment", "EnergyModel", "SimConfig", "SimMetrics", "Topology",
    "TrafficSource", "amosa_optimize", "build_topology", "latency_sweep", "load_distribution", "load_topology",
    "optimize_placement", "pick_solution", "simulate",
]
__version__ = "0.1.0"
