import pytest
import yaml

from qnetsim.topology import (
    Band,
    DanglingEndpoint,
    DuplicateId,
    MissingBandCoefficient,
    NetworkNode,
    NodeKind,
    NonContiguousPath,
    NotReserved,
    SchemaError,
    WavelengthChannel,
    edge_metric,
    load_topology,
)

from helpers import make_graph, make_node, o_chan

TESTBED_DOC = """
nodes:
  - {id: lab-a, kind: qnode, ip: 192.168.1.10, ports: [{index: 0, tag: "sw16:1"}]}
  - {id: lab-b, kind: qnode, ip: 192.168.1.11, ports: [{index: 0, tag: "sw16:2"}]}
  - id: sw16
    kind: switch
    insertion_loss_db: 1.0
    ports: [{index: 1, tag: "lab-a:0"}, {index: 2, tag: "lab-b:0"}]
links:
  - {id: fiber-a, a: {node: lab-a, port: 0}, b: {node: sw16, port: 1},
     length_km: 1.3, attenuation: {o_band: 0.33, c_band: 0.21}, total_wavelengths: 16}
  - {id: fiber-b, a: {node: sw16, port: 2}, b: {node: lab-b, port: 0},
     length_km: 1.2, attenuation: {o_band: 0.33, c_band: 0.21}, total_wavelengths: 16}
grid:
  - {label: q1, center_nm: 1310.0, width_ghz: 100.0, band: o_band}
  - {label: q2, center_nm: 1330.0, width_ghz: 100.0, band: o_band}
  - {label: C32, center_nm: 1551.72, width_ghz: 100.0, band: c_band}
"""


class TestLoadTopology:
    def test_two_labs_through_switch(self):
        # 2.5 km of fiber between two labs via a 16x16 switch node.
        g = load_topology(TESTBED_DOC)
        assert len(g.nodes) == 3
        assert len(g.links) == 2
        assert g.nodes["sw16"].kind == NodeKind.SWITCH
        assert sum(l.length_km for l in g.links.values()) == 2.5

    def test_empty_node_list_rejected(self):
        with pytest.raises(SchemaError):
            load_topology({"nodes": [], "links": [], "grid": []})

    def test_dangling_endpoint(self):
        doc = yaml.safe_load(TESTBED_DOC)
        doc["links"][0]["a"]["node"] = "X"
        with pytest.raises(DanglingEndpoint):
            load_topology(doc)

    def test_unknown_port_is_dangling(self):
        doc = yaml.safe_load(TESTBED_DOC)
        doc["links"][0]["a"]["port"] = 99
        with pytest.raises(DanglingEndpoint):
            load_topology(doc)

    def test_duplicate_node_id(self):
        doc = yaml.safe_load(TESTBED_DOC)
        doc["nodes"].append(dict(doc["nodes"][0]))
        with pytest.raises(DuplicateId):
            load_topology(doc)

    def test_unparsable_text(self):
        with pytest.raises(SchemaError):
            load_topology("nodes: [unbalanced")

    def test_qnode_requires_ip(self):
        doc = yaml.safe_load(TESTBED_DOC)
        del doc["nodes"][0]["ip"]
        with pytest.raises(SchemaError):
            load_topology(doc)

    def test_eps_requires_even_outputs(self):
        doc = yaml.safe_load(TESTBED_DOC)
        doc["nodes"][0] = {"id": "src", "kind": "eps", "wavelength_outputs": 3,
                           "ports": [{"index": 0, "tag": "sw16:1"}]}
        with pytest.raises(SchemaError):
            load_topology(doc)

    def test_self_loop_rejected(self):
        doc = yaml.safe_load(TESTBED_DOC)
        doc["links"][0]["b"] = dict(doc["links"][0]["a"])
        with pytest.raises(SchemaError):
            load_topology(doc)

    def test_round_trip(self):
        g = load_topology(TESTBED_DOC)
        again = load_topology(g.to_yaml())
        assert again.to_document() == g.to_document()


class TestEdgeMetric:
    def test_installed_fiber_span(self):
        # 45.6 km at 0.43 dB/km with a zero-insertion far node.
        g = make_graph(
            [("a", NodeKind.QNODE, 0.0), ("b", NodeKind.QNODE, 0.0)],
            [("l", "a", "b", 45.6, {Band.O_BAND: 0.43}, 8)],
            [o_chan("q1")])
        got = edge_metric(g.links["l"], g.nodes["b"], g.grid[0])
        assert got == pytest.approx(19.608, abs=1e-9)

    def test_zero_length_limit(self):
        g = make_graph(
            [("a", NodeKind.QNODE, 0.0), ("b", NodeKind.QNODE, 0.0)],
            [("l", "a", "b", 0.001, {Band.O_BAND: 0.33}, 8)],
            [o_chan("q1")])
        assert edge_metric(g.links["l"], g.nodes["b"], g.grid[0]) < 0.001

    def test_switch_insertion_added_once(self):
        # One 22.8 km hop terminating on a 1.0 dB switch.
        g = make_graph(
            [("a", NodeKind.QNODE, 0.0), ("sw", NodeKind.SWITCH, 1.0)],
            [("l", "a", "sw", 22.8, {Band.O_BAND: 0.33}, 8)],
            [o_chan("q1")])
        got = edge_metric(g.links["l"], g.nodes["sw"], g.grid[0])
        assert got == pytest.approx(8.524, abs=1e-9)

    def test_missing_band(self):
        g = make_graph(
            [("a", NodeKind.QNODE, 0.0), ("b", NodeKind.QNODE, 0.0)],
            [("l", "a", "b", 1.0, {Band.O_BAND: 0.33}, 8)],
            [("c1", 1550.0, Band.C_BAND)])
        with pytest.raises(MissingBandCoefficient):
            edge_metric(g.links["l"], g.nodes["b"], g.grid[0])


def chain_graph(n_links=4, insertion=0.5):
    nodes = [(f"n{i}", NodeKind.QNODE if i in (0, n_links) else NodeKind.SWITCH,
              0.0 if i in (0, n_links) else insertion)
             for i in range(n_links + 1)]
    links = [(f"l{i}", f"n{i}", f"n{i+1}", 1.0 + i, {Band.O_BAND: 0.3}, 8)
             for i in range(n_links)]
    grid = [o_chan(f"q{i}") for i in range(3)]
    return make_graph(nodes, links, grid)


class TestPathOps:
    def test_metric_additivity_at_every_split(self):
        g = chain_graph()
        links = [g.links[f"l{i}"] for i in range(4)]
        ch = g.grid[0]
        whole = g.path_metric("n0", links, ch)
        for cut in range(5):
            left = g.path_metric("n0", links[:cut], ch)
            right = g.path_metric(f"n{cut}", links[cut:], ch)
            assert left + right == pytest.approx(whole, abs=1e-12)

    def test_availability_intersection(self):
        g = chain_graph(n_links=2)
        g.links["l0"].reserve("q0")
        g.links["l1"].reserve("q1")
        got = g.available_channels([g.links["l0"], g.links["l1"]])
        assert {ch.label for ch in got} == {"q2"}

    def test_empty_path_gives_full_grid(self):
        g = chain_graph()
        assert g.available_channels([]) == set(g.grid)

    def test_full_link_absorbs(self):
        g = chain_graph(n_links=2)
        for ch in g.grid:
            g.links["l1"].reserve(ch.label)
        assert g.available_channels([g.links["l0"], g.links["l1"]]) == set()

    def test_capacity_cap_blocks_even_with_free_labels(self):
        g = make_graph(
            [("a", NodeKind.QNODE, 0.0), ("b", NodeKind.QNODE, 0.0)],
            [("l", "a", "b", 1.0, {Band.O_BAND: 0.3}, 1)],
            [o_chan("q0"), o_chan("q1")])
        g.links["l"].reserve("q0")
        assert g.available_channels([g.links["l"]]) == set()

    def test_monotone_availability(self):
        g = chain_graph(n_links=3)
        g.links["l2"].reserve("q1")
        prev = None
        links = []
        for i in range(3):
            links.append(g.links[f"l{i}"])
            cur = g.available_channels(links)
            if prev is not None:
                assert cur <= prev
            prev = cur

    def test_non_contiguous_path(self):
        g = chain_graph(n_links=3)
        with pytest.raises(NonContiguousPath):
            g.available_channels([g.links["l0"], g.links["l2"]])

    def test_reserve_release_conservation(self):
        g = chain_graph()
        before = {lid: set(l.occupancy) for lid, l in g.links.items()}
        g.links["l1"].reserve("q0")
        g.links["l1"].release("q0")
        assert {lid: set(l.occupancy) for lid, l in g.links.items()} == before
        with pytest.raises(NotReserved):
            g.links["l1"].release("q0")


class TestChannelValidation:
    def test_o_band_window(self):
        with pytest.raises(SchemaError):
            WavelengthChannel("bad", 1500.0, 100.0, Band.O_BAND).validate()

    def test_c_band_window(self):
        with pytest.raises(SchemaError):
            WavelengthChannel("bad", 1310.0, 100.0, Band.C_BAND).validate()

    def test_duplicate_channel_label(self):
        with pytest.raises(DuplicateId):
            make_graph([make_node("a")], [], [o_chan("q0"), o_chan("q0")])
