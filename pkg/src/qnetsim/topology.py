"""Optical network model: typed nodes, wavelength-channelized fiber links,
and loss metrics, loaded from a declarative document.

The network is an undirected weighted multigraph. Parallel fibers between
the same node pair are allowed, each with independent per-channel
occupancy. Edge weights are optical loss in dB, so they are additive
along a path. Node attributes PDL and PMD are stored and exposed but do
not enter the default metric; a custom metric hook can include them.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import yaml


class TopologyError(Exception):
    """Base class for topology validation and lookup errors."""


class SchemaError(TopologyError):
    pass


class DuplicateId(SchemaError):
    pass


class DanglingEndpoint(SchemaError):
    pass


class MissingBandCoefficient(TopologyError):
    pass


class NonContiguousPath(TopologyError):
    pass


class UnknownNode(TopologyError):
    pass


class ChannelConflict(TopologyError):
    """Channel already reserved, released twice, or link at capacity."""


class NotReserved(ChannelConflict):
    pass


class NodeKind(str, enum.Enum):
    QNODE = "qnode"
    EPS = "eps"
    BSM = "bsm"
    SWITCH = "switch"


class Band(str, enum.Enum):
    O_BAND = "o_band"
    C_BAND = "c_band"
    L_BAND = "l_band"


# Telecom windows used to sanity-check grid definitions (nm).
BAND_RANGES_NM = {
    Band.O_BAND: (1260.0, 1360.0),
    Band.C_BAND: (1530.0, 1565.0),
}


@dataclass(frozen=True)
class WavelengthChannel:
    label: str
    center_nm: float
    width_ghz: float
    band: Band

    def validate(self) -> None:
        rng = BAND_RANGES_NM.get(self.band)
        if rng and not (rng[0] <= self.center_nm <= rng[1]):
            raise SchemaError(
                f"channel {self.label}: center {self.center_nm} nm outside "
                f"{self.band.value} window {rng}")
        if self.width_ghz <= 0:
            raise SchemaError(f"channel {self.label}: width must be > 0 GHz")


@dataclass
class PortConfig:
    index: int
    tag: str

    def validate(self, node_id: str) -> None:
        if self.index < 0:
            raise SchemaError(f"node {node_id}: port index must be >= 0")
        if not self.tag:
            raise SchemaError(f"node {node_id} port {self.index}: empty tag")


@dataclass
class NetworkNode:
    id: str
    kind: NodeKind
    ip: str = ""
    insertion_loss_db: float = 0.0
    pdl_db: float = 0.0
    pmd_ps: float = 0.0
    ports: list[PortConfig] = field(default_factory=list)
    # EPS-only: number of correlated wavelength outputs (N), serving up to
    # N/2 user pairs at once.
    wavelength_outputs: int = 0
    # Capability advertisement used at registration time.
    qubit_types: list[str] = field(default_factory=list)

    def validate(self) -> None:
        if not self.id:
            raise SchemaError("node with empty id")
        for attr in ("insertion_loss_db", "pdl_db", "pmd_ps"):
            if getattr(self, attr) < 0:
                raise SchemaError(f"node {self.id}: {attr} must be >= 0")
        if self.kind == NodeKind.QNODE and not self.ip:
            raise SchemaError(f"q-node {self.id} must carry an IP address")
        if self.kind == NodeKind.EPS:
            n = self.wavelength_outputs
            if n < 2 or n % 2 != 0:
                raise SchemaError(
                    f"eps {self.id}: wavelength_outputs must be an even "
                    f"integer >= 2 (got {n})")
        seen = set()
        for p in self.ports:
            p.validate(self.id)
            if p.index in seen:
                raise SchemaError(f"node {self.id}: duplicate port index {p.index}")
            seen.add(p.index)

    def port(self, index: int) -> PortConfig:
        for p in self.ports:
            if p.index == index:
                return p
        raise DanglingEndpoint(f"node {self.id} has no port {index}")

    @property
    def max_user_pairs(self) -> int:
        return self.wavelength_outputs // 2


@dataclass
class FiberLink:
    id: str
    endpoints: tuple[tuple[str, int], tuple[str, int]]
    length_km: float
    attenuation_db_per_km: dict[Band, float]
    total_wavelengths: int
    occupancy: set[str] = field(default_factory=set)
    admin_up: bool = True

    def validate(self) -> None:
        if self.length_km <= 0:
            raise SchemaError(f"link {self.id}: length_km must be > 0")
        if self.total_wavelengths < 1:
            raise SchemaError(f"link {self.id}: total_wavelengths must be >= 1")
        if not self.attenuation_db_per_km:
            raise SchemaError(f"link {self.id}: no attenuation coefficients declared")
        for band, coeff in self.attenuation_db_per_km.items():
            if coeff <= 0:
                raise SchemaError(
                    f"link {self.id}: attenuation for {band.value} must be > 0")
        (na, pa), (nb, pb) = self.endpoints
        if na == nb:
            raise SchemaError(f"link {self.id}: self-loops are not allowed")

    def attenuation(self, band: Band) -> float:
        try:
            return self.attenuation_db_per_km[band]
        except KeyError:
            raise MissingBandCoefficient(
                f"link {self.id} declares no attenuation for {band.value}") from None

    def other_end(self, node_id: str) -> tuple[str, int]:
        (na, pa), (nb, pb) = self.endpoints
        if node_id == na:
            return (nb, pb)
        if node_id == nb:
            return (na, pa)
        raise NonContiguousPath(f"link {self.id} does not touch node {node_id}")

    def touches(self, node_id: str) -> bool:
        return node_id in (self.endpoints[0][0], self.endpoints[1][0])

    @property
    def at_capacity(self) -> bool:
        return len(self.occupancy) >= self.total_wavelengths

    def reserve(self, channel_label: str) -> None:
        if channel_label in self.occupancy:
            raise ChannelConflict(
                f"channel {channel_label} already reserved on link {self.id}")
        if self.at_capacity:
            raise ChannelConflict(f"link {self.id} is at wavelength capacity")
        self.occupancy.add(channel_label)

    def release(self, channel_label: str) -> None:
        if channel_label not in self.occupancy:
            raise NotReserved(
                f"channel {channel_label} is not reserved on link {self.id}")
        self.occupancy.discard(channel_label)


def edge_metric(link: FiberLink, far_node: NetworkNode, channel: WavelengthChannel) -> float:
    """Loss in dB of one hop: fiber attenuation at the channel's band plus
    the far node's insertion loss (counted once per traversal)."""
    return link.length_km * link.attenuation(channel.band) + far_node.insertion_loss_db


@dataclass
class NetworkGraph:
    nodes: dict[str, NetworkNode] = field(default_factory=dict)
    links: dict[str, FiberLink] = field(default_factory=dict)
    grid: list[WavelengthChannel] = field(default_factory=list)

    # -- lookup ---------------------------------------------------------

    def node(self, node_id: str) -> NetworkNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def channel(self, label: str) -> WavelengthChannel:
        for ch in self.grid:
            if ch.label == label:
                return ch
        raise TopologyError(f"channel {label} not on the grid")

    def links_at(self, node_id: str) -> list[FiberLink]:
        """Links touching a node, sorted by link id for determinism."""
        return [self.links[lid] for lid in sorted(self.links)
                if self.links[lid].touches(node_id)]

    def walk_nodes(self, src: str, links: list[FiberLink]) -> list[str]:
        """Node sequence visited by following ``links`` from ``src``."""
        seq = [src]
        here = src
        for link in links:
            if not link.touches(here):
                raise NonContiguousPath(
                    f"link {link.id} does not continue the path at {here}")
            here = link.other_end(here)[0]
            seq.append(here)
        return seq

    # -- metrics ----------------------------------------------------------

    def path_metric(self, src: str, links: list[FiberLink],
                    channel: WavelengthChannel) -> float:
        """Total loss in dB along a path, additive per hop."""
        total = 0.0
        here = src
        for link in links:
            far_id = link.other_end(here)[0]
            total += edge_metric(link, self.node(far_id), channel)
            here = far_id
        return total

    def available_channels(self, links: list[FiberLink]) -> set[WavelengthChannel]:
        """Wavelength-continuity set: channels free on every link of the path.

        An empty path yields the full grid. A link at wavelength capacity
        contributes an empty set, so it forces the intersection empty.
        """
        if links:
            # Validates contiguity as a side condition of set semantics.
            self.walk_nodes(self._path_start(links), links)
        avail = set(self.grid)
        for link in links:
            if link.at_capacity:
                return set()
            avail &= {ch for ch in self.grid if ch.label not in link.occupancy}
        return avail

    def _path_start(self, links: list[FiberLink]) -> str:
        if len(links) == 1:
            return links[0].endpoints[0][0]
        first, second = links[0], links[1]
        for end, _ in first.endpoints:
            if not second.touches(end):
                return end
        # Both ends touch the next link (tiny cycle); either works.
        return first.endpoints[0][0]

    # -- validation ------------------------------------------------------

    def validate(self) -> None:
        if not self.nodes:
            raise SchemaError("topology has no nodes")
        labels = set()
        for ch in self.grid:
            ch.validate()
            if ch.label in labels:
                raise DuplicateId(f"duplicate channel label {ch.label}")
            labels.add(ch.label)
        for node in self.nodes.values():
            node.validate()
        for link in self.links.values():
            link.validate()
            for node_id, port in link.endpoints:
                if node_id not in self.nodes:
                    raise DanglingEndpoint(
                        f"link {link.id} references unknown node {node_id}")
                self.nodes[node_id].port(port)  # raises DanglingEndpoint
            if len(link.occupancy) > link.total_wavelengths:
                raise SchemaError(f"link {link.id}: occupancy exceeds capacity")

    # -- serialization -----------------------------------------------------

    def to_document(self) -> dict:
        """Canonical dict form: nodes and links sorted by id, grid in order."""
        nodes = []
        for nid in sorted(self.nodes):
            n = self.nodes[nid]
            d = {
                "id": n.id,
                "kind": n.kind.value,
                "insertion_loss_db": n.insertion_loss_db,
                "pdl_db": n.pdl_db,
                "pmd_ps": n.pmd_ps,
                "ports": [{"index": p.index, "tag": p.tag} for p in
                          sorted(n.ports, key=lambda p: p.index)],
            }
            if n.ip:
                d["ip"] = n.ip
            if n.kind == NodeKind.EPS:
                d["wavelength_outputs"] = n.wavelength_outputs
            if n.qubit_types:
                d["qubit_types"] = list(n.qubit_types)
            nodes.append(d)
        links = []
        for lid in sorted(self.links):
            l = self.links[lid]
            (na, pa), (nb, pb) = sorted(l.endpoints)
            links.append({
                "id": l.id,
                "a": {"node": na, "port": pa},
                "b": {"node": nb, "port": pb},
                "length_km": l.length_km,
                "attenuation": {b.value: c for b, c in
                                sorted(l.attenuation_db_per_km.items(),
                                       key=lambda kv: kv[0].value)},
                "total_wavelengths": l.total_wavelengths,
            })
        grid = [{"label": ch.label, "center_nm": ch.center_nm,
                 "width_ghz": ch.width_ghz, "band": ch.band.value}
                for ch in self.grid]
        return {"nodes": nodes, "links": links, "grid": grid}

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_document(), sort_keys=False)


_KIND_ALIASES = {
    "qnode": NodeKind.QNODE,
    "q-node": NodeKind.QNODE,
    "eps": NodeKind.EPS,
    "bsm": NodeKind.BSM,
    "switch": NodeKind.SWITCH,
    "optical_switch": NodeKind.SWITCH,
}


def _as_mapping(value, what: str) -> dict:
    if not isinstance(value, dict):
        raise SchemaError(f"{what} must be a mapping, got {type(value).__name__}")
    return value


def _parse_node(raw) -> NetworkNode:
    raw = _as_mapping(raw, "node entry")
    try:
        node_id = str(raw["id"])
        kind_str = str(raw["kind"]).lower()
    except KeyError as exc:
        raise SchemaError(f"node entry missing required key {exc}") from None
    kind = _KIND_ALIASES.get(kind_str)
    if kind is None:
        raise SchemaError(f"node {node_id}: unknown kind {kind_str!r}")
    ports = [PortConfig(index=int(_as_mapping(p, "port")["index"]),
                        tag=str(_as_mapping(p, "port").get("tag", "")))
             for p in raw.get("ports", [])]
    return NetworkNode(
        id=node_id,
        kind=kind,
        ip=str(raw.get("ip", "")),
        insertion_loss_db=float(raw.get("insertion_loss_db", 0.0)),
        pdl_db=float(raw.get("pdl_db", 0.0)),
        pmd_ps=float(raw.get("pmd_ps", 0.0)),
        ports=ports,
        wavelength_outputs=int(raw.get("wavelength_outputs", 0)),
        qubit_types=[str(q) for q in raw.get("qubit_types", [])],
    )


def _parse_link(raw) -> FiberLink:
    raw = _as_mapping(raw, "link entry")
    try:
        link_id = str(raw["id"])
        a = _as_mapping(raw["a"], f"link {raw.get('id')} endpoint a")
        b = _as_mapping(raw["b"], f"link {raw.get('id')} endpoint b")
        length = float(raw["length_km"])
        atten_raw = _as_mapping(raw["attenuation"], f"link {raw.get('id')} attenuation")
        total = int(raw["total_wavelengths"])
    except KeyError as exc:
        raise SchemaError(f"link entry missing required key {exc}") from None
    atten = {}
    for band_str, coeff in atten_raw.items():
        try:
            band = Band(band_str)
        except ValueError:
            raise SchemaError(
                f"link {link_id}: unknown band {band_str!r} in attenuation") from None
        atten[band] = float(coeff)
    return FiberLink(
        id=link_id,
        endpoints=((str(a["node"]), int(a.get("port", 0))),
                   (str(b["node"]), int(b.get("port", 0)))),
        length_km=length,
        attenuation_db_per_km=atten,
        total_wavelengths=total,
    )


def load_topology(document) -> NetworkGraph:
    """Parse and validate a topology document.

    Accepts YAML/JSON text or an already-parsed mapping with top-level
    keys ``nodes``, ``links``, and ``grid``.
    """
    if isinstance(document, (str, bytes)):
        try:
            document = yaml.safe_load(document)
        except yaml.YAMLError as exc:
            raise SchemaError(f"unparsable topology document: {exc}") from None
    doc = _as_mapping(document, "topology document")
    unknown = set(doc) - {"nodes", "links", "grid"}
    if unknown:
        raise SchemaError(f"unknown top-level keys: {sorted(unknown)}")

    graph = NetworkGraph()
    for raw in doc.get("nodes") or []:
        node = _parse_node(raw)
        if node.id in graph.nodes:
            raise DuplicateId(f"duplicate node id {node.id}")
        graph.nodes[node.id] = node
    for raw in doc.get("grid") or []:
        m = _as_mapping(raw, "grid entry")
        try:
            band = Band(str(m["band"]))
        except (KeyError, ValueError) as exc:
            raise SchemaError(f"grid entry {m.get('label')}: bad band ({exc})") from None
        try:
            ch = WavelengthChannel(label=str(m["label"]), center_nm=float(m["center_nm"]),
                                   width_ghz=float(m["width_ghz"]), band=band)
        except KeyError as exc:
            raise SchemaError(f"grid entry missing required key {exc}") from None
        graph.grid.append(ch)
    for raw in doc.get("links") or []:
        link = _parse_link(raw)
        if link.id in graph.links:
            raise DuplicateId(f"duplicate link id {link.id}")
        graph.links[link.id] = link

    graph.validate()
    return graph


def load_topology_file(path) -> NetworkGraph:
    with open(path) as fh:
        return load_topology(fh.read())
