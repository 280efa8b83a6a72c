"""Assembles a runnable system: engine, bus, world, controller, agents."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..simkernel import Engine, MessageBus, s_to_ns
from ..topology import NetworkGraph, NodeKind
from .agents import AgentBase, EpsAgent, NodeAgent, SdnAgent, SwitchAgent
from .server import SDN_AGENT_ID, ControlPlaneConfig, NetworkController
from .world import ModelParams, PhysicsWorld


@dataclass
class SimSystem:
    engine: Engine
    bus: MessageBus
    graph: NetworkGraph
    world: PhysicsWorld
    controller: NetworkController
    agents: dict[str, AgentBase] = field(default_factory=dict)
    sdn: SdnAgent | None = None

    def run_discovery(self, settle_s: float = 1.0) -> None:
        """Let registration and claim verification drain."""
        self.engine.run_until(self.engine.now_ns + s_to_ns(settle_s))

    def run_to_quiescence(self):
        return self.engine.run_until()


def build_system(graph: NetworkGraph, params: ModelParams | None = None,
                 config: ControlPlaneConfig | None = None,
                 root_seed: int = 0,
                 claim_overrides: dict[str, dict[int, str]] | None = None,
                 offline_at: dict[str, float] | None = None,
                 bus_latency_ns: int = 1_000_000) -> SimSystem:
    """Wire the full control plane over a topology.

    ``claim_overrides`` maps resource id -> {port: wrong_tag} to simulate
    stale resource configs for discovery quarantine. ``offline_at`` maps
    resource id -> virtual seconds at which it silently departs.
    """
    engine = Engine(root_seed=root_seed)
    bus = MessageBus(engine, latency_ns=bus_latency_ns)
    params = params or ModelParams()
    world = PhysicsWorld(graph, params, engine)
    config = config or ControlPlaneConfig()
    controller = NetworkController(engine, bus, graph, world, config)

    sdn = SdnAgent(resource_id=SDN_AGENT_ID, engine=engine, bus=bus,
                   graph=graph, world=world)
    sdn.start()

    agents: dict[str, AgentBase] = {}
    overrides = claim_overrides or {}
    node_agents = []
    for i, nid in enumerate(sorted(graph.nodes)):
        node = graph.nodes[nid]
        delay = 0.001 * (i + 1)
        if node.kind in (NodeKind.QNODE, NodeKind.BSM):
            agent = NodeAgent(resource_id=nid, engine=engine, bus=bus,
                              graph=graph, world=world, register_delay_s=delay,
                              batch_interval_s=config.batch_interval_s,
                              claim_overrides=overrides.get(nid, {}))
            node_agents.append(agent)
        elif node.kind == NodeKind.EPS:
            agent = EpsAgent(resource_id=nid, engine=engine, bus=bus,
                             graph=graph, world=world, register_delay_s=delay,
                             claim_overrides=overrides.get(nid, {}))
        else:
            agent = SwitchAgent(resource_id=nid, engine=engine, bus=bus,
                                graph=graph, world=world, register_delay_s=delay)
        agents[nid] = agent
        agent.start()
    controller.node_agents = node_agents

    for rid, at_s in (offline_at or {}).items():
        world.offline_at[rid] = at_s

        def depart(ev, resource=rid):
            agent = agents.get(resource)
            if agent is not None:
                agent.go_offline()
            if resource in sdn.switch_online:
                sdn.switch_online[resource] = False
            entry = controller.registry.get(resource)
            if entry is not None:
                entry.online = False

        engine.schedule_at(s_to_ns(at_s), depart)

    return SimSystem(engine=engine, bus=bus, graph=graph, world=world,
                     controller=controller, agents=agents, sdn=sdn)
