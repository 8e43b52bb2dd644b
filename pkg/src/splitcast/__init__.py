"""Light-tree multicast signaling in WDM networks with sparse light splitting."""
from .engine import CostLedger, EpisodeResult, NonQuiescent, Simulation, restore, snapshot
from .fabric import (
    ADD_DROP, FabricState, FanoutExceeded, SplitterUnavailable, WavelengthBusy,
    release_branch, reserve_branch, sad_geometry,
)
from .protocol import ProtocolParams, Regime, validate_tree
from .topology import (
    NodeDescriptor, Topology, TopologyError, build_splitter_database, build_topology,
    explicit_topology, generate_topology, load_topology, save_topology, shortest_path,
)
from .tree import LightTree, leaf_power

__version__ = "0.1.0"

__all__ = [
    "ADD_DROP", "CostLedger", "EpisodeResult", "FabricState", "FanoutExceeded", "LightTree",
    "NodeDescriptor", "NonQuiescent", "ProtocolParams", "Regime", "Simulation", "SplitterUnavailable",
    "Topology", "TopologyError", "WavelengthBusy", "build_splitter_database", "build_topology",
    "explicit_topology", "generate_topology", "leaf_power", "load_topology", "release_branch",
    "reserve_branch", "restore", "sad_geometry", "save_topology", "shortest_path", "snapshot",
    "validate_tree",
]
