"""Deterministic discrete-event network simulator with fault injection."""

from duobft.simnet.faults import Behavior, FaultScript, NodeFault, Partition, Strategy
from duobft.simnet.latency import LatencyMatrix, builtin
from duobft.simnet.sim import SimResult, Simulation

__all__ = [
    "Behavior", "FaultScript", "LatencyMatrix", "NodeFault", "Partition", "SimResult",
    "Simulation", "Strategy", "builtin",
]
