"""Trusted-relay key transport over a mesh of pairwise QKD links.

An end-to-end key K travels hop by hop: on link (u, v) node u sends
``K xor P_uv`` where P_uv is fresh pad drawn from that link's distilled key
pool, and v strips the pad.  Each relay sees K in the clear for the
duration of the hop and then zeroizes it.
"""

from __future__ import annotations

import logging
import struct
import threading
import uuid
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .auth import AuthChannel
from .bits import DecodeError, pack_le, unpack_le
from .engine import DEFAULT_QBER_THRESHOLD, InProcessChannel, PipelineStats, QKDLink
from .errors import ConfigError, KeyStarvation
from .keypool import KeyBlock, KeyPool, Purpose
from .wire import MsgType

log = logging.getLogger(__name__)

MONITOR_WINDOW = 10
RECOVERY_BLOCKS = 20


class LinkStatus(str, Enum):
    UP = "up"
    ALARMED = "alarmed"
    CUT = "cut"


class Topology(str, Enum):
    FULL_MESH = "full_mesh"
    STAR = "star"
    RING = "ring"
    LINE = "line"


def link_key(u: str, v: str) -> tuple[str, str]:
    if u == v:
        raise ConfigError(f"self-loop at {u!r}")
    return (u, v) if u < v else (v, u)


@dataclass
class RelayLink:
    """State of one pairwise link; ``a`` < ``b`` and ``a`` plays Alice."""

    a: str
    b: str
    pools: dict[str, KeyPool]
    channel: InProcessChannel
    engine: QKDLink | None = None
    status: LinkStatus = LinkStatus.UP
    window: deque = field(default_factory=lambda: deque(maxlen=MONITOR_WINDOW))
    clean_streak: int = 0
    alarms: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def key(self) -> tuple[str, str]:
        return (self.a, self.b)

    def level(self) -> int:
        return min(p.available_bits() for p in self.pools.values())

    def direction(self, src: str) -> str:
        return "A->B" if src == self.a else "B->A"

    def rolling_qber(self) -> float:
        b = sum(x[0] for x in self.window)
        return sum(x[1] for x in self.window) / b if b else 0.0


@dataclass(frozen=True)
class RelayKeyMessage:
    transport_id: bytes
    hop: int
    key_len: int
    ciphertext: bytes

    def to_payload(self) -> bytes:
        return self.transport_id + struct.pack(">II", self.hop, self.key_len) + self.ciphertext

    @classmethod
    def from_payload(cls, payload: bytes) -> "RelayKeyMessage":
        if len(payload) < 24:
            raise DecodeError("RELAY_KEY payload shorter than its fixed fields")
        hop, key_len = struct.unpack_from(">II", payload, 16)
        ct = payload[24:]
        if len(ct) != -(-key_len // 8):
            raise DecodeError("RELAY_KEY ciphertext length disagrees with key_len")
        return cls(payload[:16], hop, key_len, ct)


@dataclass(frozen=True)
class Receipt:
    hop: int
    link: tuple[str, str]
    bits: int
    pieces: tuple[tuple[int, int, int], ...]


@dataclass
class KeyTransport:
    transport_id: bytes
    source: str
    destination: str
    key_len: int
    path: list[str]
    receipts: list[Receipt] = field(default_factory=list)
    completed: bool = False
    reason: str = ""
    source_key: np.ndarray | None = None
    destination_key: np.ndarray | None = None


class RelayGraph:
    def __init__(self, nodes=(), qber_threshold: float = DEFAULT_QBER_THRESHOLD, recovery_blocks: int = RECOVERY_BLOCKS):
        self.nodes: list[str] = sorted(set(nodes))
        self.links: dict[tuple[str, str], RelayLink] = {}
        self.qber_threshold = qber_threshold
        self.recovery_blocks = recovery_blocks
        # per-node scratch holding end-to-end key material in the clear
        self.node_memory: dict[str, dict[bytes, np.ndarray]] = {n: {} for n in self.nodes}
        self.events: list[tuple[tuple[str, str], str, str]] = []
        self._status_lock = threading.Lock()
        self._session_ids = 0

    def add_node(self, node: str) -> None:
        if node not in self.node_memory:
            self.nodes = sorted(set(self.nodes) | {node})
            self.node_memory[node] = {}

    def _next_session(self) -> int:
        self._session_ids += 1
        return self._session_ids

    def add_engine_link(self, u: str, v: str, engine: QKDLink) -> RelayLink:
        """Link whose pools are filled by a running QKD pipeline."""
        a, b = link_key(u, v)
        return self._add(RelayLink(a, b, {a: engine.alice_pool, b: engine.bob_pool}, engine.channel, engine))

    def add_prefilled_link(self, u: str, v: str, key_bits: int, rng: np.random.Generator, auth_bits: int = 1 << 16) -> RelayLink:
        """Link with an already-distilled key of ``key_bits`` (for experiments that skip the optics)."""
        a, b = link_key(u, v)
        alice, bob = AuthChannel.pair(rng.integers(0, 2, auth_bits, dtype=np.uint8), low_watermark=0)
        chan = InProcessChannel(self._next_session(), alice, bob)
        pools = {a: KeyPool(), b: KeyPool()}
        if key_bits:
            bits = rng.integers(0, 2, key_bits, dtype=np.uint8)
            pools[a].deposit(KeyBlock(1, bits.copy(), key_bits))
            pools[b].deposit(KeyBlock(1, bits, key_bits))
        return self._add(RelayLink(a, b, pools, chan))

    def _add(self, link: RelayLink) -> RelayLink:
        if link.key in self.links:
            raise ConfigError(f"duplicate link {link.key}")
        self.add_node(link.a)
        self.add_node(link.b)
        self.links[link.key] = link
        return link

    def link(self, u: str, v: str) -> RelayLink:
        return self.links[link_key(u, v)]

    def neighbors(self, node: str, min_level: int = 0) -> list[str]:
        out = []
        for (a, b), lk in self.links.items():
            if node not in (a, b) or lk.status is not LinkStatus.UP:
                continue
            if min_level and lk.level() < min_level:
                continue
            out.append(b if node == a else a)
        return sorted(out)

    def set_status(self, key: tuple[str, str], status: LinkStatus, why: str) -> None:
        with self._status_lock:
            lk = self.links[key]
            if lk.status is not status:
                self.events.append((key, status.value, why))
                log.info("link %s-%s -> %s (%s)", key[0], key[1], status.value, why)
            lk.status = status

    def cut(self, u: str, v: str) -> None:
        self.set_status(link_key(u, v), LinkStatus.CUT, "cut event")


def route(graph: RelayGraph, src: str, dst: str, key_len: int = 0) -> list[str] | None:
    """Minimum-hop path over usable links; lexicographically smallest among ties."""
    if src == dst:
        raise ValueError("route needs src != dst")
    for n in (src, dst):
        if n not in graph.node_memory:
            raise ConfigError(f"unknown node {n!r}")
    dist = {dst: 0}
    frontier = deque([dst])
    while frontier:
        u = frontier.popleft()
        for v in graph.neighbors(u, key_len):
            if v not in dist:
                dist[v] = dist[u] + 1
                frontier.append(v)
    if src not in dist:
        return None
    path = [src]
    while path[-1] != dst:
        here = path[-1]
        path.append(min(v for v in graph.neighbors(here, key_len) if dist.get(v) == dist[here] - 1))
    return path


def _xor_bytes(bits: np.ndarray, pad: np.ndarray) -> bytes:
    return pack_le(bits ^ pad)


def transport_key(
    graph: RelayGraph,
    src: str,
    dst: str,
    key_len: int,
    rng: np.random.Generator,
    path: list[str] | None = None,
) -> KeyTransport:
    """Move a fresh ``key_len``-bit key from ``src`` to ``dst``; never raises on starvation."""
    if key_len < 1:
        raise ValueError("key_len must be >= 1")
    tid = uuid.UUID(bytes=rng.bytes(16), version=4).bytes
    if path is None:
        path = route(graph, src, dst, key_len)
    tr = KeyTransport(tid, src, dst, key_len, path or [])
    if not path:
        tr.reason = "unreachable"
        return tr
    key = rng.integers(0, 2, key_len, dtype=np.uint8)
    tr.source_key = key.copy()
    graph.node_memory[src][tid] = key
    try:
        for hop, (u, v) in enumerate(zip(path, path[1:])):
            lk = graph.link(u, v)
            if lk.status is not LinkStatus.UP:
                raise KeyStarvation(f"link {u}-{v} is {lk.status.value}")
            with lk.lock:
                if lk.level() < key_len:
                    raise KeyStarvation(f"link {u}-{v} holds {lk.level()} bits, need {key_len}")
                pad_u = lk.pools[u].reserve(key_len, Purpose.RELAY)
                pad_v = lk.pools[v].reserve(key_len, Purpose.RELAY)
            tr.receipts.append(Receipt(hop, lk.key, key_len, pad_u.pieces))
            msg = RelayKeyMessage(tid, hop, key_len, _xor_bytes(graph.node_memory[u][tid], pad_u.bits))
            delivered = RelayKeyMessage.from_payload(lk.channel.send(lk.direction(u), MsgType.RELAY_KEY, msg.to_payload()))
            graph.node_memory[v][tid] = unpack_le(delivered.ciphertext, key_len) ^ pad_v.bits
            pad_u.bits[:] = 0
            pad_v.bits[:] = 0
            if u != src:
                _zeroize(graph, u, tid)
    except KeyStarvation as exc:
        tr.reason = f"aborted: {exc}"
        for node in path:
            _zeroize(graph, node, tid)
        tr.source_key[:] = 0
        tr.source_key = None
        log.info("transport %s aborted at hop %d: %s", tid.hex()[:8], len(tr.receipts), exc)
        return tr
    tr.destination_key = graph.node_memory[dst].pop(tid)
    graph.node_memory[src].pop(tid)[:] = 0
    tr.completed = True
    tr.reason = "ok"
    return tr


def _zeroize(graph: RelayGraph, node: str, tid: bytes) -> None:
    held = graph.node_memory[node].pop(tid, None)
    if held is not None:
        held[:] = 0


def request_key(graph: RelayGraph, src: str, dst: str, bits: int, rng: np.random.Generator):
    """Internal API for tunnels: ``(src_key, dst_key)`` or a failure reason string."""
    if src == dst:
        return "src and dst are the same node"
    tr = transport_key(graph, src, dst, bits, rng)
    if not tr.completed:
        return tr.reason
    return tr.source_key, tr.destination_key


def link_monitor(
    graph: RelayGraph, key: tuple[str, str], stats: PipelineStats | None = None, cut: bool = False
) -> tuple[LinkStatus, LinkStatus]:
    """Feed one block's stats (or a cut event) to a link; returns (old, new) status."""
    lk = graph.links[link_key(*key)]
    old = lk.status
    if cut:
        graph.set_status(lk.key, LinkStatus.CUT, "cut event")
        return old, lk.status
    if stats is None or stats.b <= 0 or old is LinkStatus.CUT:
        return old, old
    lk.window.append((stats.b, stats.e))
    block_clean = stats.e / stats.b <= graph.qber_threshold
    if old is LinkStatus.UP:
        if lk.rolling_qber() > graph.qber_threshold:
            lk.alarms += 1
            lk.clean_streak = 0
            graph.set_status(lk.key, LinkStatus.ALARMED, f"rolling QBER {lk.rolling_qber():.3f}")
    elif old is LinkStatus.ALARMED:
        lk.clean_streak = lk.clean_streak + 1 if block_clean else 0
        if lk.clean_streak >= graph.recovery_blocks:
            lk.window.clear()
            lk.clean_streak = 0
            graph.set_status(lk.key, LinkStatus.UP, f"{graph.recovery_blocks} clean blocks")
    return old, lk.status


def topology_link_count(n_nodes: int, topology: Topology | str) -> int:
    if n_nodes < 2:
        raise ValueError("need at least two nodes")
    topology = Topology(topology)
    if topology is Topology.FULL_MESH:
        return n_nodes * (n_nodes - 1) // 2
    if topology is Topology.RING:
        return n_nodes if n_nodes > 2 else 1
    # star: hub plus n-1 leaves; line: n-1 hops
    return n_nodes - 1


def topology_edges(nodes: list[str], topology: Topology | str) -> list[tuple[str, str]]:
    topology = Topology(topology)
    n = len(nodes)
    if topology is Topology.FULL_MESH:
        edges = [(nodes[i], nodes[j]) for i in range(n) for j in range(i + 1, n)]
    elif topology is Topology.STAR:
        edges = [(nodes[0], x) for x in nodes[1:]]
    elif topology is Topology.LINE:
        edges = list(zip(nodes, nodes[1:]))
    else:
        edges = list(zip(nodes, nodes[1:])) + ([(nodes[-1], nodes[0])] if n > 2 else [])
    assert len(edges) == topology_link_count(n, topology)
    return edges
