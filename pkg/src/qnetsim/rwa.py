"""Routing and wavelength assignment.

Connections are routed shortest-path-first: candidate loop-free paths are
enumerated in ascending loss order, each path's free channels are ordered
by the wavelength policy, and the first feasible (path, wavelength) pair
is reserved end-to-end. If no pair exists the connection is blocked.

The path-ordering metric is the loss in dB computed at the constraints'
required band, or at the band of the grid's first channel when no band is
required. Ties are broken by hop count, then by the lexicographic link-id
sequence, making the ordering total and the assignment deterministic.
"""

from __future__ import annotations

import enum
import heapq
from dataclasses import dataclass, field
from typing import Callable

from .topology import (
    Band,
    FiberLink,
    NetworkGraph,
    NotReserved,
    TopologyError,
    UnknownNode,
    WavelengthChannel,
)


class WavelengthPolicy(str, enum.Enum):
    FIRST_FIT = "first_fit"
    LOWEST_LOSS = "lowest_loss"
    EXPLICIT = "explicit"


@dataclass
class RwaConstraints:
    required_band: Band | None = None
    max_loss_db: float | None = None
    k_paths: int = 3
    wavelength_policy: WavelengthPolicy = WavelengthPolicy.FIRST_FIT
    preferred_channels: list[str] = field(default_factory=list)
    # Optional metric hook: extra per-hop penalty (dB-equivalent) charged
    # for traversing a node, e.g. to punish high PDL or PMD. The default
    # metric is pure loss so results stay reproducible.
    node_penalty: "Callable[[object], float] | None" = None

    def __post_init__(self) -> None:
        if self.k_paths < 1:
            raise ValueError("k_paths must be >= 1")
        if self.max_loss_db is not None and self.max_loss_db <= 0:
            raise ValueError("max_loss_db must be > 0 when bounded")
        if (self.wavelength_policy == WavelengthPolicy.EXPLICIT
                and not self.preferred_channels):
            raise ValueError("explicit policy needs preferred_channels")


@dataclass
class Lightpath:
    """A routed path carrying a single wavelength end-to-end."""

    id: str
    link_ids: list[str]
    channel: WavelengthChannel
    total_loss_db: float
    endpoints: tuple[str, str]
    active: bool = True

    def links(self, graph: NetworkGraph) -> list[FiberLink]:
        return [graph.links[lid] for lid in self.link_ids]


def metric_band(graph: NetworkGraph, constraints: RwaConstraints) -> Band:
    if constraints.required_band is not None:
        return constraints.required_band
    if not graph.grid:
        raise TopologyError("grid is empty; cannot pick a metric band")
    return graph.grid[0].band


def _usable(link: FiberLink, band: Band) -> bool:
    return link.admin_up and band in link.attenuation_db_per_km


@dataclass(frozen=True)
class _Candidate:
    loss: float
    hops: int
    link_ids: tuple[str, ...]

    def sort_key(self):
        return (self.loss, self.hops, self.link_ids)


def find_and_sort_paths(graph: NetworkGraph, src: str, dst: str,
                        constraints: RwaConstraints) -> list[list[FiberLink]]:
    """Up to k_paths loop-free paths, ascending by (loss, hops, link ids).

    Paths whose loss exceeds max_loss_db are excluded. Returns an empty
    list (not an error) when src and dst are disconnected.
    """
    if src not in graph.nodes:
        raise UnknownNode(src)
    if dst not in graph.nodes:
        raise UnknownNode(dst)
    if src == dst:
        raise ValueError("src and dst must differ")
    band = metric_band(graph, constraints)
    candidates = _yen(graph, src, dst, band, constraints.k_paths,
                      constraints.max_loss_db, penalty=constraints.node_penalty)
    candidates.sort(key=_Candidate.sort_key)
    out = candidates[:constraints.k_paths]
    return [[graph.links[lid] for lid in c.link_ids] for c in out]


def _shortest(graph: NetworkGraph, src: str, dst: str, band: Band,
              banned_nodes: frozenset[str] = frozenset(),
              banned_links: frozenset[str] = frozenset(),
              max_loss: float | None = None,
              penalty: Callable | None = None) -> _Candidate | None:
    """Dijkstra with deterministic (loss, hops, link ids) priority."""
    best: dict[str, tuple[float, int, tuple[str, ...]]] = {}
    heap: list[tuple[float, int, tuple[str, ...], str]] = [(0.0, 0, (), src)]
    visited: set[str] = set()
    while heap:
        loss, hops, trail, here = heapq.heappop(heap)
        if here in visited:
            continue
        visited.add(here)
        if here == dst:
            return _Candidate(loss, hops, trail)
        for link in graph.links_at(here):
            if link.id in banned_links or not _usable(link, band):
                continue
            far = link.other_end(here)[0]
            if far in banned_nodes or far in visited:
                continue
            far_node = graph.node(far)
            step = link.length_km * link.attenuation_db_per_km[band] \
                + far_node.insertion_loss_db
            if penalty is not None:
                step += penalty(far_node)
            key = (loss + step, hops + 1, trail + (link.id,))
            if max_loss is not None and key[0] > max_loss:
                continue
            if far not in best or key < best[far]:
                best[far] = key
                heapq.heappush(heap, (key[0], key[1], key[2], far))
    return None


def _yen(graph: NetworkGraph, src: str, dst: str, band: Band, k: int,
         max_loss: float | None, hard_cap: int = 256,
         penalty: Callable | None = None) -> list[_Candidate]:
    """Loopless paths in nondecreasing loss, gathering full tie groups at
    the k-th loss so the final sort is exact."""
    first = _shortest(graph, src, dst, band, max_loss=max_loss, penalty=penalty)
    if first is None:
        return []
    accepted: list[_Candidate] = [first]
    frontier: list[tuple[tuple, _Candidate]] = []
    seen: set[tuple[str, ...]] = {first.link_ids}

    def kth_loss() -> float | None:
        if len(accepted) < k:
            return None
        return sorted(c.loss for c in accepted)[k - 1]

    while len(accepted) < hard_cap:
        prev = accepted[-1]
        prev_nodes = graph.walk_nodes(src, [graph.links[l] for l in prev.link_ids])
        for i in range(len(prev.link_ids)):
            spur_node = prev_nodes[i]
            root_ids = prev.link_ids[:i]
            banned_links = set()
            for c in accepted:
                if c.link_ids[:i] == root_ids and len(c.link_ids) > i:
                    banned_links.add(c.link_ids[i])
            banned_nodes = frozenset(prev_nodes[:i])
            spur = _shortest(graph, spur_node, dst, band,
                             banned_nodes=banned_nodes,
                             banned_links=frozenset(banned_links),
                             max_loss=None, penalty=penalty)
            if spur is None:
                continue
            root_loss = 0.0
            here = src
            for lid in root_ids:
                link = graph.links[lid]
                far = link.other_end(here)[0]
                far_node = graph.node(far)
                root_loss += link.length_km * link.attenuation_db_per_km[band] \
                    + far_node.insertion_loss_db
                if penalty is not None:
                    root_loss += penalty(far_node)
                here = far
            total = _Candidate(root_loss + spur.loss, i + spur.hops,
                               root_ids + spur.link_ids)
            if max_loss is not None and total.loss > max_loss:
                continue
            if total.link_ids not in seen:
                seen.add(total.link_ids)
                heapq.heappush(frontier, (total.sort_key(), total))
        if not frontier:
            break
        bound = kth_loss()
        if bound is not None and frontier[0][1].loss > bound:
            break
        accepted.append(heapq.heappop(frontier)[1])
    return accepted


def sort_wavelengths(graph: NetworkGraph, path: list[FiberLink],
                     constraints: RwaConstraints) -> list[WavelengthChannel]:
    """Free channels on the path, ordered per the wavelength policy.

    A channel is only offered if its band is costed (has an attenuation
    coefficient) on every link of the path, since a lightpath without a
    computable loss cannot be verified downstream.
    """
    available = graph.available_channels(path)  # raises NonContiguousPath
    grid_index = {ch.label: i for i, ch in enumerate(graph.grid)}

    def offered(ch: WavelengthChannel) -> bool:
        if constraints.required_band is not None and ch.band != constraints.required_band:
            return False
        return all(ch.band in link.attenuation_db_per_km for link in path)

    chans = [ch for ch in graph.grid if ch in available and offered(ch)]
    policy = constraints.wavelength_policy
    if policy == WavelengthPolicy.FIRST_FIT:
        return chans
    if policy == WavelengthPolicy.LOWEST_LOSS:
        if path:
            src = graph._path_start(path)
            return sorted(chans, key=lambda ch: (graph.path_metric(src, path, ch),
                                                 grid_index[ch.label]))
        return chans
    if policy == WavelengthPolicy.EXPLICIT:
        by_label = {ch.label: ch for ch in chans}
        return [by_label[lbl] for lbl in constraints.preferred_channels
                if lbl in by_label]
    raise ValueError(f"unknown wavelength policy {policy}")


def _next_lightpath_id(graph: NetworkGraph) -> str:
    n = getattr(graph, "_lightpath_seq", 0)
    setattr(graph, "_lightpath_seq", n + 1)
    return f"lp-{n}"


def sp_rwa(graph: NetworkGraph, src: str, dst: str, constraints: RwaConstraints,
           lightpath_id: str | None = None) -> Lightpath | None:
    """Route one connection. Returns the reserved lightpath, or None when
    the connection is blocked (no path, or no wavelength on any path)."""
    for path in find_and_sort_paths(graph, src, dst, constraints):
        wavelengths = sort_wavelengths(graph, path, constraints)
        if not wavelengths:
            continue
        channel = wavelengths[0]
        for link in path:
            link.reserve(channel.label)
        loss = graph.path_metric(src, path, channel)
        return Lightpath(
            id=lightpath_id if lightpath_id is not None else _next_lightpath_id(graph),
            link_ids=[l.id for l in path],
            channel=channel,
            total_loss_db=loss,
            endpoints=(src, dst),
        )
    return None


def release(graph: NetworkGraph, lightpath: Lightpath) -> None:
    """Free the lightpath's channel on every constituent link.

    Releasing an already-released lightpath raises NotReserved rather
    than passing silently, so double accounting is caught at the source.
    """
    if not lightpath.active:
        raise NotReserved(f"lightpath {lightpath.id} is not reserved")
    for link in lightpath.links(graph):
        link.release(lightpath.channel.label)
    lightpath.active = False


def route_to_bsm(graph: NetworkGraph, node_a: str, node_b: str, bsm_node: str,
                 constraints: RwaConstraints,
                 id_prefix: str | None = None) -> tuple[Lightpath, Lightpath] | None:
    """Two lightpaths node_a->bsm and node_b->bsm, reserved atomically.

    The legs may use different channels. If either leg is infeasible the
    other is rolled back and None (blocked) is returned.
    """
    from .topology import NodeKind

    bsm = graph.node(bsm_node)
    if bsm.kind != NodeKind.BSM:
        raise TopologyError(f"node {bsm_node} is not a BSM node")
    pa = f"{id_prefix}-a" if id_prefix else None
    pb = f"{id_prefix}-b" if id_prefix else None
    leg_a = sp_rwa(graph, node_a, bsm_node, constraints, lightpath_id=pa)
    if leg_a is None:
        return None
    leg_b = sp_rwa(graph, node_b, bsm_node, constraints, lightpath_id=pb)
    if leg_b is None:
        release(graph, leg_a)
        return None
    return (leg_a, leg_b)
