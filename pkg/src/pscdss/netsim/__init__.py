"""Discrete-event latency and throughput simulation over satellite-terrestrial topologies."""

from .engine import EventQueue, LinkModel, Network, message_delay
from .protocols import Metrics, Protocol, Workload, measure_tps, run_scenario
from .tle import TleError, TleRecord, load_tle, parse_tle
from .topology import LinkKind, Topology, build_topology

__all__ = [
    "EventQueue", "LinkKind", "LinkModel", "Metrics", "Network", "Protocol", "TleError",
    "TleRecord", "Topology", "Workload", "build_topology", "load_tle", "measure_tps",
    "message_delay", "parse_tle", "run_scenario",
]
