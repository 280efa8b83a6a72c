"""Controller, SDN agent, and simulated resource agents.

The controller owns all mutable network state (registry, graph occupancy,
request records) and runs entirely on the event-loop thread. Resources
are simulated agents that exchange protocol messages with the controller
over the bus; the physical layer they sample lives in
:class:`~qnetsim.controlplane.world.PhysicsWorld`.
"""

from .messages import Kind, RequestState, Topics, check_state_sequence
from .records import (
    EntanglementRequest,
    ProtocolOrderViolation,
    QubitType,
    RequestRecord,
    ResourceRegistration,
    ServiceType,
)
from .world import CoexistenceParams, DetectionChannelParams, EpsParams, \
    ModelParams, PhysicsWorld
from .server import ControlPlaneConfig, NetworkController
from .agents import EpsAgent, NodeAgent, SdnAgent, SwitchAgent, \
    verification_verdict
from .builder import SimSystem, build_system

__all__ = [
    "Kind", "RequestState", "Topics", "check_state_sequence",
    "EntanglementRequest", "ProtocolOrderViolation", "QubitType",
    "RequestRecord", "ResourceRegistration", "ServiceType",
    "CoexistenceParams", "DetectionChannelParams", "EpsParams",
    "ModelParams", "PhysicsWorld",
    "ControlPlaneConfig", "NetworkController",
    "EpsAgent", "NodeAgent", "SdnAgent", "SwitchAgent",
    "verification_verdict",
    "SimSystem", "build_system",
]
