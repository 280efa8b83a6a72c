"""Shared builders and independent oracles used across the test suite.

The oracles deliberately re-derive results by brute force (exhaustive
enumeration, Monte-Carlo point processes) so they share no code with the
implementation paths they check.
"""

from __future__ import annotations

import numpy as np

from qnetsim.topology import (
    Band,
    FiberLink,
    NetworkGraph,
    NetworkNode,
    NodeKind,
    PortConfig,
    WavelengthChannel,
)


def make_node(node_id: str, kind: NodeKind = NodeKind.QNODE,
              insertion_loss_db: float = 0.0, n_ports: int = 8,
              **kwargs) -> NetworkNode:
    ip = kwargs.pop("ip", f"10.0.0.{abs(hash(node_id)) % 250 + 1}"
                    if kind == NodeKind.QNODE else "")
    ports = [PortConfig(index=i, tag=f"{node_id}-peer:{i}") for i in range(n_ports)]
    return NetworkNode(id=node_id, kind=kind, ip=ip,
                       insertion_loss_db=insertion_loss_db, ports=ports, **kwargs)


def make_graph(node_specs, link_specs, grid_specs) -> NetworkGraph:
    """Compact constructor.

    node_specs: list of NetworkNode or (id, kind, insertion_loss) tuples.
    link_specs: (link_id, node_a, node_b, length_km, {Band: coeff}, total_wavelengths)
    grid_specs: (label, center_nm, band) or WavelengthChannel
    """
    g = NetworkGraph()
    for spec in node_specs:
        node = spec if isinstance(spec, NetworkNode) else make_node(*spec)
        g.nodes[node.id] = node
    port_cursor = {nid: 0 for nid in g.nodes}

    def take_port(nid: str) -> int:
        idx = port_cursor[nid]
        port_cursor[nid] += 1
        node = g.nodes[nid]
        if all(p.index != idx for p in node.ports):
            node.ports.append(PortConfig(index=idx, tag=f"{nid}-peer:{idx}"))
        return idx

    for spec in link_specs:
        lid, a, b, km, atten, total = spec
        pa, pb = take_port(a), take_port(b)
        g.links[lid] = FiberLink(
            id=lid, endpoints=((a, pa), (b, pb)), length_km=km,
            attenuation_db_per_km=dict(atten), total_wavelengths=total)
    for spec in grid_specs:
        if isinstance(spec, WavelengthChannel):
            g.grid.append(spec)
        else:
            label, center, band = spec
            g.grid.append(WavelengthChannel(label, center, 100.0, band))
    g.validate()
    return g


def o_chan(label: str, center_nm: float = 1310.0) -> WavelengthChannel:
    return WavelengthChannel(label, center_nm, 100.0, Band.O_BAND)


# -- independent RWA oracle ---------------------------------------------------

def enumerate_simple_paths(graph: NetworkGraph, src: str, dst: str):
    """All loop-free paths (as link-id lists) by depth-first search."""
    paths = []

    def dfs(here, visited, trail):
        if here == dst:
            paths.append(list(trail))
            return
        for lid in sorted(graph.links):
            link = graph.links[lid]
            if not link.admin_up or not link.touches(here):
                continue
            far = link.other_end(here)[0]
            if far in visited:
                continue
            trail.append(lid)
            dfs(far, visited | {far}, trail)
            trail.pop()

    dfs(src, {src}, [])
    return paths


def path_loss_at_band(graph: NetworkGraph, src: str, link_ids, band: Band) -> float | None:
    """Loss recomputed from scratch; None when a link lacks the band."""
    total = 0.0
    here = src
    for lid in link_ids:
        link = graph.links[lid]
        if band not in link.attenuation_db_per_km:
            return None
        far = link.other_end(here)[0]
        total += link.length_km * link.attenuation_db_per_km[band]
        total += graph.nodes[far].insertion_loss_db
        here = far
    return total


def rwa_oracle(graph: NetworkGraph, src: str, dst: str, constraints):
    """Exhaustive (simple path x channel) feasibility search.

    Returns (feasible, best) where best is the minimal
    (metric_loss, hops, link_ids) over paths carrying at least one
    offered channel, plus that path's grid-first offered channel label.
    """
    from qnetsim.rwa import metric_band

    band = metric_band(graph, constraints)
    best = None
    for link_ids in enumerate_simple_paths(graph, src, dst):
        loss = path_loss_at_band(graph, src, link_ids, band)
        if loss is None:
            continue
        if constraints.max_loss_db is not None and loss > constraints.max_loss_db:
            continue
        offered = []
        for ch in graph.grid:
            if constraints.required_band is not None and ch.band != constraints.required_band:
                continue
            ok = True
            for lid in link_ids:
                link = graph.links[lid]
                if (ch.label in link.occupancy or link.at_capacity
                        or ch.band not in link.attenuation_db_per_km):
                    ok = False
                    break
            if ok:
                offered.append(ch.label)
        if not offered:
            continue
        key = (loss, len(link_ids), tuple(link_ids))
        if best is None or key < best[0]:
            best = (key, offered[0])
    if best is None:
        return False, None
    return True, best


# -- seeded random graphs (acceptance-scale) -----------------------------------

def random_graph(rng: np.random.Generator) -> NetworkGraph:
    """Random multigraph within the acceptance envelope:
    <= 8 nodes, <= 12 links, <= 8 channels, mixed bands."""
    n_nodes = int(rng.integers(3, 9))
    n_links = int(rng.integers(n_nodes - 1, 13))
    n_chans = int(rng.integers(1, 9))
    multi_band = bool(rng.random() < 0.3)
    nodes = [(f"n{i}", NodeKind.QNODE if i < 2 else
              (NodeKind.SWITCH if rng.random() < 0.5 else NodeKind.QNODE),
              float(rng.uniform(0, 2))) for i in range(n_nodes)]
    links = []
    for j in range(n_links):
        a, b = rng.choice(n_nodes, size=2, replace=False)
        atten = {Band.O_BAND: float(rng.uniform(0.2, 0.6))}
        if multi_band:
            atten[Band.C_BAND] = float(rng.uniform(0.15, 0.4))
        links.append((f"l{j}", f"n{a}", f"n{b}", float(rng.uniform(0.5, 30)),
                      atten, int(rng.integers(1, n_chans + 1))))
    grid = []
    for k in range(n_chans):
        if multi_band and rng.random() < 0.4:
            grid.append(WavelengthChannel(f"c{k}", 1530.0 + k, 100.0, Band.C_BAND))
        else:
            grid.append(WavelengthChannel(f"q{k}", 1270.0 + k, 100.0, Band.O_BAND))
    return make_graph(nodes, links, grid)


# -- independent accidental-rate oracle ----------------------------------------

def mc_accidental_rate(s1_hz: float, s2_hz: float, tau_s: float,
                       duration_s: float, rng: np.random.Generator) -> float:
    """Accidental coincidence rate from two independent Poisson processes.

    Draws actual click times for both detectors over the duration and
    counts cross pairs with |t1 - t2| <= tau/2 (a centered window of
    width tau). The expected pair count is exactly s1*s2*tau*T.
    """
    n1 = rng.poisson(s1_hz * duration_s)
    n2 = rng.poisson(s2_hz * duration_s)
    t1 = np.sort(rng.uniform(0.0, duration_s, size=n1))
    t2 = np.sort(rng.uniform(0.0, duration_s, size=n2))
    half = tau_s / 2.0
    lo = np.searchsorted(t2, t1 - half, side="left")
    hi = np.searchsorted(t2, t1 + half, side="right")
    return float((hi - lo).sum()) / duration_s
