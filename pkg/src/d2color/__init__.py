"""Collision/conflict-free distance-2 coloring: simulator and verifier."""

__version__ = "0.1.0"

from .engine import ClashDetected, ProtocolViolation, Simulation  # noqa: F401
from .topology import Topology, build_topology, generate_random_tree  # noqa: F401
from .verifier import verify_run  # noqa: F401
