"""Per-link QKD pipeline: sift -> reconcile -> estimate -> amplify -> confirm.

Both endpoints live in one process but talk only through framed,
authenticated public messages; every stage sees just its own side's data.
"""

from __future__ import annotations

import io
import logging
import math
import struct
from collections.abc import Sequence
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import cascade
from .amplify import MAX_N, PAParams, choose_pa_params, pa_hash
from .auth import DEFAULT_PREPOSITIONED_BITS, AuthChannel
from .entropy import (
    DEFAULT_CONFIDENCE,
    BitAccount,
    DefenseFunction,
    LinkKind,
    default_m_coefficients,
    defense_estimate,
    resultant_entropy,
)
from .errors import (
    AuthDesync,
    AuthFailure,
    AuthStarvation,
    ConfigError,
    MalformedFrame,
    ProtocolError,
    ReconciliationFailure,
)
from .keypool import KeyBlock, KeyPool, Purpose
from .qchannel import NO_EVE, ChannelParams, EveModel, generate_frame, make_rng, propagate_and_detect
from .sift import FrameStore, SiftProposal, SiftResponse, alice_sift, bob_sift, build_proposal
from .wire import HEADER_LEN, TRAILER_LEN, MsgType, frame_message, parse_header, parse_message

log = logging.getLogger(__name__)

DEFAULT_QBER_THRESHOLD = 0.12


@dataclass(frozen=True)
class PipelinePolicy:
    defense: DefenseFunction = DefenseFunction.BENNETT
    c: float = DEFAULT_CONFIDENCE
    qber_threshold: float = DEFAULT_QBER_THRESHOLD
    min_block_bits: int = 1024
    max_block_bits: int = MAX_N
    max_frames_per_block: int = 64
    max_rounds: int = 16
    subsets: int = cascade.DEFAULT_SUBSETS
    r: float = 0.0
    m1: float | None = None
    m2: float | None = None
    link_kind: LinkKind = LinkKind.WEAK_COHERENT
    auth_low_watermark: int = 4096
    auth_replenish_bits: int = 4096

    def __post_init__(self):
        object.__setattr__(self, "defense", DefenseFunction(self.defense))
        object.__setattr__(self, "link_kind", LinkKind(self.link_kind))
        if not 0 < self.qber_threshold < 0.5:
            raise ConfigError("qber_threshold must lie in (0, 0.5)")
        if not 1 <= self.min_block_bits <= self.max_block_bits <= MAX_N:
            raise ConfigError(f"need 1 <= min_block_bits <= max_block_bits <= {MAX_N}")
        if self.c < 0:
            raise ConfigError("confidence c must be >= 0")


@dataclass
class PipelineStats:
    link: str
    block_id: int
    status: str
    reason: str
    n: int = 0
    detections: int = 0
    b: int = 0
    e: int = 0
    d: int = 0
    t: float = 0.0
    s: float = 0.0
    resultant: int = 0
    qber: float = 0.0
    key_rate: float = 0.0
    messages: int = 0
    auth_bits: int = 0
    sim_time: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class BlockResult:
    stats: PipelineStats
    key: KeyBlock | None = None
    account: BitAccount | None = None

    @property
    def delivered(self) -> bool:
        return self.key is not None


def qber_alarm(stats, threshold: float = DEFAULT_QBER_THRESHOLD) -> bool:
    b, e = (stats.b, stats.e) if not isinstance(stats, tuple) else stats
    if b <= 0:
        raise ValueError("QBER alarm needs b > 0")
    return e / b > threshold


class InProcessChannel:
    """Reliable in-memory public channel between the two endpoints of a link.

    Every message is framed with the sender's auth pool and parsed and
    verified with the receiver's; the raw frames are kept as a transcript.
    """

    def __init__(self, session_id: int, alice: AuthChannel, bob: AuthChannel, keep_transcript: bool = False):
        self.session_id = session_id
        self.auth = {"A": alice, "B": bob}
        self.keep_transcript = keep_transcript
        self.transcript: list[tuple[str, bytes]] = []
        self.messages = 0
        self.auth_bits = 0

    @classmethod
    def prepositioned(cls, session_id: int, rng: np.random.Generator, key_bits: int = DEFAULT_PREPOSITIONED_BITS):
        """Channel keyed from a fresh random prepositioned secret."""
        alice, bob = AuthChannel.pair(rng.integers(0, 2, key_bits, dtype=np.uint8), low_watermark=0)
        return cls(session_id, alice, bob)

    def send(self, direction: str, msg_type: int, payload: bytes) -> bytes:
        src, dst = direction.split("->")
        raw = frame_message(msg_type, self.session_id, payload, self.auth[src])
        self.messages += 1
        self.auth_bits += 2 * self.auth[src].width
        if self.keep_transcript:
            self.transcript.append((direction, raw))
        msg = parse_message(raw, self.auth[dst])
        if msg.session_id != self.session_id:
            raise ProtocolError("session id mismatch")
        return msg.payload


def write_frame(stream: io.RawIOBase, frame: bytes) -> None:
    stream.write(frame)


def read_frame(stream) -> bytes:
    """Read one PublicMessage frame from a byte stream (blocking)."""
    head = _read_exact(stream, HEADER_LEN)
    if head[:2] != b"QK":
        raise MalformedFrame("bad magic")
    plen = struct.unpack(">I", head[8:12])[0]
    rest = _read_exact(stream, plen + TRAILER_LEN)
    data = head + rest
    parse_header(data)
    return data


def _read_exact(stream, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            raise MalformedFrame("stream closed mid-frame")
        buf += chunk
    return bytes(buf)


class QKDLink:
    """One point-to-point QKD session with both endpoints' state."""

    def __init__(
        self,
        params: ChannelParams,
        eve: EveModel = NO_EVE,
        policy: PipelinePolicy | None = None,
        seed: int | Sequence[int] | None = None,
        name: str = "A-B",
        session_id: int = 1,
        auth_key=None,
        auth_key_bits: int = DEFAULT_PREPOSITIONED_BITS,
        keep_transcript: bool = False,
        keep_eve_knowledge: bool = False,
    ):
        self.params = params
        self.eve = eve
        self.policy = policy or PipelinePolicy()
        self.name = name
        seed = params.rng_seed if seed is None else seed
        ss = np.random.SeedSequence(seed)
        chan_ss, alice_ss, key_ss = ss.spawn(3)
        self.channel_rng = make_rng(chan_ss)
        self.alice_rng = make_rng(alice_ss)
        if auth_key is None:
            auth_key = make_rng(key_ss).integers(0, 2, auth_key_bits, dtype=np.uint8)
        self.alice_auth, self.bob_auth = AuthChannel.pair(auth_key, low_watermark=self.policy.auth_low_watermark)
        self.channel = InProcessChannel(session_id, self.alice_auth, self.bob_auth, keep_transcript)
        self.alice_pool = KeyPool(auth_guard_bits=2 * self.policy.auth_replenish_bits)
        self.bob_pool = KeyPool(auth_guard_bits=2 * self.policy.auth_replenish_bits)
        m1, m2 = default_m_coefficients(params, self.policy.link_kind)
        self.m1 = m1 if self.policy.m1 is None else self.policy.m1
        self.m2 = m2 if self.policy.m2 is None else self.policy.m2
        self.frames = FrameStore()
        self._frame_id = 0
        self._block_id = 0
        self._carry_a = np.zeros(0, dtype=np.uint8)
        self._carry_b = np.zeros(0, dtype=np.uint8)
        self._carry_n = 0
        self._carry_det = 0
        self.sim_time = 0.0
        self.delivered_bits = 0
        self.auth_replenished_bits = 0
        self.keep_eve_knowledge = keep_eve_knowledge
        self.eve_knowledge = []
        self.eve_touched = 0
        self.history: list[PipelineStats] = []
        self.aborted = ""

    # -- stages --------------------------------------------------------

    def send(self, direction: str, msg_type: int, payload: bytes) -> bytes:
        return self.channel.send(direction, msg_type, payload)

    def _run_frame(self) -> None:
        self._frame_id += 1
        frame = generate_frame(self.params, self.channel_rng, self._frame_id)
        self.frames.put(frame)
        det, knowledge = propagate_and_detect(frame, self.params, self.eve, self.channel_rng)
        self.eve_touched += len(knowledge)
        if self.keep_eve_knowledge and len(knowledge):
            self.eve_knowledge.append((self._frame_id, knowledge))
        self.sim_time += frame.duration_s
        usable = int(np.count_nonzero(det.usable))
        if len(frame) == 0:
            return
        proposal = SiftProposal.from_payload(
            self.send("B->A", MsgType.SIFT_PROPOSE, build_proposal(det).to_payload())
        )
        response, a_bits = alice_sift(proposal, self.frames.take(proposal.frame_id))
        response = SiftResponse.from_payload(self.send("A->B", MsgType.SIFT_RESPONSE, response.to_payload()))
        b_bits = bob_sift(response, det)
        self._carry_a = np.concatenate((self._carry_a, a_bits))
        self._carry_b = np.concatenate((self._carry_b, b_bits))
        self._carry_n += len(frame)
        self._carry_det += usable

    def _take_block(self) -> tuple[np.ndarray, np.ndarray, int, int]:
        total = self._carry_a.size
        size = min(total, self.policy.max_block_bits)
        # pulses and detections are apportioned to the block pro rata
        n = self._carry_n if size == total else int(round(self._carry_n * size / total))
        det = self._carry_det if size == total else int(round(self._carry_det * size / total))
        a, b = self._carry_a[:size], self._carry_b[:size]
        self._carry_a, self._carry_b = self._carry_a[size:], self._carry_b[size:]
        self._carry_n -= n
        self._carry_det -= det
        return a, b, max(n, size), det

    def run_block(self) -> BlockResult:
        self._block_id += 1
        bid = self._block_id
        msgs0, auth0 = self.channel.messages, self.channel.auth_bits
        stats = PipelineStats(self.name, bid, "discarded", "")
        if self.aborted:
            result = BlockResult(stats)
            stats.status, stats.reason = "aborted", self.aborted
        else:
            try:
                result = self._pipeline(stats)
            except (AuthFailure, AuthDesync, AuthStarvation) as exc:
                self._reset_session(f"session aborted: {exc}")
                result = BlockResult(stats)
                stats.status, stats.reason = "aborted", self.aborted
            except ProtocolError as exc:
                result = BlockResult(stats)
                stats.reason = f"protocol error: {exc}"
        stats.messages = self.channel.messages - msgs0
        stats.auth_bits = self.channel.auth_bits - auth0
        stats.sim_time = self.sim_time
        net = self.delivered_bits - self.auth_replenished_bits
        stats.key_rate = net / self.sim_time if self.sim_time > 0 else 0.0
        self.history.append(stats)
        log.debug("link %s block %d: %s %s", self.name, bid, stats.status, stats.reason)
        return result

    def _reset_session(self, reason: str) -> None:
        """Drop in-flight material; delivered blocks stay in the pools."""
        self.aborted = reason
        self._carry_a[:] = 0
        self._carry_b[:] = 0
        self._carry_a = np.zeros(0, dtype=np.uint8)
        self._carry_b = np.zeros(0, dtype=np.uint8)
        self._carry_n = self._carry_det = 0
        log.warning("link %s: %s", self.name, reason)

    def _pipeline(self, stats: PipelineStats) -> BlockResult:
        frames = 0
        while self._carry_a.size < self.policy.min_block_bits and frames < self.policy.max_frames_per_block:
            self._run_frame()
            frames += 1
        if self._carry_a.size == 0:
            stats.n, self._carry_n = self._carry_n, 0
            stats.detections, self._carry_det = self._carry_det, 0
            stats.reason = "empty block"
            return BlockResult(stats)

        a_bits, b_bits, n, det = self._take_block()
        b = int(a_bits.size)
        stats.n, stats.detections, stats.b = n, det, b
        try:
            rec = cascade.reconcile(
                a_bits,
                b_bits,
                max_rounds=self.policy.max_rounds,
                rng=self.alice_rng,
                subsets=self.policy.subsets,
                send=self.send,
                bulk_after=int(math.floor(self.policy.qber_threshold * b)) + 1,
            )
        except ReconciliationFailure as exc:
            stats.reason = f"reconciliation failed: {exc}"
            return BlockResult(stats)
        stats.e, stats.d = rec.e_detected, rec.d
        stats.qber = rec.e_detected / b
        if qber_alarm(stats, self.policy.qber_threshold):
            stats.reason = "eavesdropping suspected"
            return BlockResult(stats)

        acct = BitAccount(b, rec.e_detected, n, rec.d, self.policy.r, self.m1, self.m2, self.policy.c)
        est = defense_estimate(acct, self.policy.defense)
        m = resultant_entropy(acct, est)
        stats.t, stats.s, stats.resultant = est.t, est.s, m
        pa = choose_pa_params(b, m, self.alice_rng)
        if pa is None:
            stats.reason = "insufficient entropy"
            return BlockResult(stats, account=acct)
        bob_pa = PAParams.from_payload(self.send("A->B", MsgType.PA_PARAMS, pa.to_payload()))
        alice_key = pa_hash(rec.alice_bits, pa)
        bob_key = pa_hash(rec.bob_bits, bob_pa)
        confirm = struct.pack(">QI", stats.block_id, m)
        if self.send("A->B", MsgType.KEY_CONFIRM, confirm) != confirm:
            raise ProtocolError("key confirmation garbled")
        self.send("B->A", MsgType.KEY_CONFIRM, confirm)

        a_block = KeyBlock(stats.block_id, alice_key, m)
        self.alice_pool.deposit(a_block)
        self.bob_pool.deposit(KeyBlock(stats.block_id, bob_key, m))
        self.delivered_bits += m
        self._maybe_replenish_auth()
        stats.status, stats.reason = "delivered", "ok"
        return BlockResult(stats, a_block, acct)

    def _maybe_replenish_auth(self) -> None:
        low = self.alice_auth.is_low() or self.bob_auth.is_low()
        self.alice_pool.auth_low = self.bob_pool.auth_low = low
        want = 2 * self.policy.auth_replenish_bits
        if not low or self.alice_pool.available_bits() < want:
            return
        a = self.alice_pool.reserve(want, Purpose.AUTH_REPLENISH).bits
        b = self.bob_pool.reserve(want, Purpose.AUTH_REPLENISH).bits
        half = self.policy.auth_replenish_bits
        self.alice_auth.replenish(a[:half], a[half:])
        self.bob_auth.replenish(b[half:], b[:half])
        self.auth_replenished_bits += want
        self.alice_pool.auth_low = self.bob_pool.auth_low = self.alice_auth.is_low() or self.bob_auth.is_low()

    def run(self, blocks: int) -> list[BlockResult]:
        return [self.run_block() for _ in range(blocks)]
