import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qkdf.auth import intervals_disjoint
from qkdf.engine import PipelineStats
from qkdf.errors import ConfigError
from qkdf.relaynet import (
    LinkStatus,
    RelayGraph,
    RelayKeyMessage,
    link_key,
    link_monitor,
    request_key,
    route,
    topology_edges,
    topology_link_count,
    transport_key,
)


def graph(edges, key_bits=4096, seed=0, nodes=None):
    rng = np.random.default_rng(seed)
    g = RelayGraph(nodes or sorted({n for e in edges for n in e}))
    for u, v in edges:
        g.add_prefilled_link(u, v, key_bits, rng)
    return g


def stats(b, e):
    return PipelineStats("x", 0, "discarded", "", b=b, e=e)


def test_direct_path():
    assert route(graph(["AB"]), "A", "B") == ["A", "B"]


def test_triangle_avoids_alarmed_link():
    g = graph(["AB", "BC", "AC"])
    g.set_status(("A", "B"), LinkStatus.ALARMED, "test")
    assert route(g, "A", "B") == ["A", "C", "B"]


def test_unreachable():
    g = graph(["AB", "BC"])
    g.cut("B", "C")
    assert route(g, "A", "C") is None
    tr = transport_key(g, "A", "C", 64, np.random.default_rng(1))
    assert not tr.completed and tr.reason == "unreachable"
    with pytest.raises(ValueError):
        route(g, "A", "A")
    with pytest.raises(ConfigError):
        route(g, "A", "Z")


def test_tie_break_lexicographic():
    g = graph(["AC", "AB", "BD", "CD"])
    assert route(g, "A", "D") == ["A", "B", "D"]


def test_pool_level_excludes_links():
    g = graph(["AB", "BC", "AC"])
    g.link("A", "C").pools["A"].reserve(4000, "relay")
    g.link("A", "C").pools["C"].reserve(4000, "relay")
    assert route(g, "A", "C", key_len=256) == ["A", "B", "C"]


def test_one_hop_consumption():
    g = graph(["AB"])
    tr = transport_key(g, "A", "B", 200, np.random.default_rng(2))
    assert tr.completed and [r.bits for r in tr.receipts] == [200]
    assert g.link("A", "B").level() == 4096 - 200


def test_three_hops():
    g = graph(["AB", "BC", "CD"], key_bits=1024)
    tr = transport_key(g, "A", "D", 256, np.random.default_rng(3))
    assert tr.completed and tr.path == ["A", "B", "C", "D"]
    assert sum(r.bits for r in tr.receipts) == 768
    assert np.array_equal(tr.source_key, tr.destination_key)
    assert all(not mem for mem in g.node_memory.values())


def test_starvation_at_hop_two():
    rng = np.random.default_rng(4)
    g = RelayGraph("ABC")
    g.add_prefilled_link("A", "B", 1024, rng)
    g.add_prefilled_link("B", "C", 100, rng)
    tr = transport_key(g, "A", "C", 256, rng, path=["A", "B", "C"])
    assert not tr.completed and tr.reason.startswith("aborted")
    assert [r.hop for r in tr.receipts] == [0]
    assert tr.destination_key is None and tr.source_key is None
    assert all(not mem for mem in g.node_memory.values())
    assert g.link("B", "C").level() == 100


def test_request_key():
    g = graph(["AB", "BC"])
    k_src, k_dst = request_key(g, "A", "C", 128, np.random.default_rng(5))
    assert np.array_equal(k_src, k_dst)
    assert request_key(g, "A", "A", 128, np.random.default_rng(5)) == "src and dst are the same node"


def test_intermediate_zeroized_during_transport():
    g = graph(["AB", "BC", "CD"])
    seen = []
    lk = g.link("C", "D")
    orig = lk.channel.send

    def spy(direction, mtype, payload):
        seen.append({n: len(m) for n, m in g.node_memory.items()})
        return orig(direction, mtype, payload)

    lk.channel.send = spy
    transport_key(g, "A", "D", 64, np.random.default_rng(6))
    # when C forwards, B has already erased its copy
    assert seen == [{"A": 1, "B": 0, "C": 1, "D": 0}]


def test_relay_message_roundtrip():
    m = RelayKeyMessage(bytes(range(16)), 2, 10, b"\xff\x03")
    assert RelayKeyMessage.from_payload(m.to_payload()) == m
    assert m.to_payload()[16:24] == b"\x00\x00\x00\x02\x00\x00\x00\x0a"


@settings(max_examples=30)
@given(st.integers(3, 8), st.floats(0.2, 0.9), st.integers(0, 2**31))
def test_random_topologies(n, density, seed):
    rng = np.random.default_rng(seed)
    nodes = [f"n{i}" for i in range(n)]
    edges = [(nodes[i], nodes[i + 1]) for i in range(n - 1)]  # spanning line
    edges += [(nodes[i], nodes[j]) for i in range(n) for j in range(i + 2, n) if rng.random() < density]
    g = graph(edges, key_bits=2048, seed=seed)
    for _ in range(6):
        s, d = rng.choice(n, 2, replace=False)
        tr = transport_key(g, nodes[s], nodes[d], int(rng.integers(1, 300)), rng)
        if tr.completed:
            assert np.array_equal(tr.source_key, tr.destination_key)
            assert [r.bits for r in tr.receipts] == [tr.key_len] * (len(tr.path) - 1)
    for lk in g.links.values():
        for side in lk.pools.values():
            assert intervals_disjoint([(s, e) for b, s, e in side.consumed_intervals()])


def test_ring_survives_single_alarm():
    nodes = ["n1", "n2", "n3", "n4"]
    for bad in topology_edges(nodes, "ring"):
        g = graph(topology_edges(nodes, "ring"), key_bits=8192)
        g.set_status(link_key(*bad), LinkStatus.ALARMED, "test")
        rng = np.random.default_rng(7)
        for i, s in enumerate(nodes):
            for d in nodes[i + 1 :]:
                tr = transport_key(g, s, d, 128, rng)
                assert tr.completed, (bad, s, d)


def test_monitor_alarms_within_window():
    g = graph(["AB"])
    for i in range(10):
        old, new = link_monitor(g, ("A", "B"), stats(1000, 250))
        if new is LinkStatus.ALARMED:
            break
    assert new is LinkStatus.ALARMED and i < 10


def test_monitor_rolling_window():
    g = graph(["AB"])
    for _ in range(9):
        link_monitor(g, ("A", "B"), stats(1000, 60))
    # a single noisy block is diluted by the window
    assert link_monitor(g, ("A", "B"), stats(1000, 200))[1] is LinkStatus.UP


def test_monitor_cut_and_recovery():
    g = graph(["AB"])
    g.recovery_blocks = 3
    link_monitor(g, ("A", "B"), stats(100, 50))
    assert g.link("A", "B").status is LinkStatus.ALARMED
    for _ in range(2):
        link_monitor(g, ("A", "B"), stats(1000, 10))
    assert g.link("A", "B").status is LinkStatus.ALARMED
    link_monitor(g, ("A", "B"), stats(1000, 10))
    assert g.link("A", "B").status is LinkStatus.UP
    assert link_monitor(g, ("B", "A"), cut=True) == (LinkStatus.UP, LinkStatus.CUT)
    assert link_monitor(g, ("A", "B"), stats(1000, 0))[1] is LinkStatus.CUT


def test_clean_link_stays_up():
    g = graph(["AB"])
    rng = np.random.default_rng(8)
    for _ in range(1000):
        b = 1200
        link_monitor(g, ("A", "B"), stats(b, int(rng.binomial(b, 0.07))))
    assert g.link("A", "B").status is LinkStatus.UP and not g.events


@pytest.mark.parametrize("n,mesh,star", [(5, 10, 4), (2, 1, 1), (10, 45, 9)])
def test_topology_counts(n, mesh, star):
    assert topology_link_count(n, "full_mesh") == mesh
    assert topology_link_count(n, "star") == star
    nodes = [str(i) for i in range(n)]
    assert len(topology_edges(nodes, "full_mesh")) == mesh
    with pytest.raises(ValueError):
        topology_link_count(1, "star")


def test_duplicate_link():
    g = graph(["AB"])
    with pytest.raises(ConfigError):
        g.add_prefilled_link("B", "A", 10, np.random.default_rng(0))
