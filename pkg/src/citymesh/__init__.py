"""citymesh: a desk-scale simulator for a resilient smart-city communication
network built on mode-morphing street lights, a covert inter-light mesh,
CRDT-replicated citizen messaging, and an operator command center."""

from .core import (
    CENTER,
    CityMeshError,
    GuidanceState,
    Mode,
    NodeId,
    NodeKind,
    SensorFrame,
    SensorKind,
    decode_frame,
    device_id,
    encode_frame,
    light_id,
)
from .crdt import AuthorKey, CrdtState, ForwardDecision, Message, ReplicaStore
from .engine import Engine, run_scenario
from .scenario import Scenario, load_scenario, parse_scenario, serialize_scenario

__version__ = "0.1.0"

__all__ = [
    "CENTER",
    "AuthorKey",
    "CityMeshError",
    "CrdtState",
    "Engine",
    "ForwardDecision",
    "GuidanceState",
    "Message",
    "Mode",
    "NodeId",
    "NodeKind",
    "ReplicaStore",
    "Scenario",
    "SensorFrame",
    "SensorKind",
    "decode_frame",
    "device_id",
    "encode_frame",
    "light_id",
    "load_scenario",
    "parse_scenario",
    "run_scenario",
    "serialize_scenario",
    "__version__",
]
