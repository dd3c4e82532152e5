"""Key-consuming tunnels between two gateways.

Two modes:

* ``reseed``: a 256-bit AES-GCM session key derived with HKDF-SHA256 from
  fresh QKD bits and both sides' nonces, replaced on a time or volume
  lifetime.
* ``otp``: data is XORed with pad bits and tagged with a Wegman-Carter tag
  whose key also comes from the pad; pad is never reused.

Before any traffic a key-confirmation exchange checks that both gateways
hold the same key; a mismatch destroys the material and retries with new
bits.  IKE is not modelled; negotiation is a minimal offer/accept/confirm.
"""

from __future__ import annotations

import logging
import os
import struct
from collections.abc import Callable
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .auth import key_bits_per_tag, tag_from_key
from .bits import DecodeError, pack_le
from .engine import InProcessChannel
from .errors import ConfigError, IntegrityError, KeyStarvation, ProtocolError
from .keypool import KeyPool, Purpose
from .relaynet import RelayGraph, request_key
from .wire import MsgType

log = logging.getLogger(__name__)

OP_OFFER, OP_ACCEPT, OP_CONFIRM, OP_REKEY = 1, 2, 3, 4
NONCE_LEN = 16
CONFIRM_PLAINTEXT = b"qkdf key confirmation v1"
KDF_INFO = b"qkdf tunnel session key"


class TunnelMode(str, Enum):
    RESEED = "reseed"
    OTP = "otp"


MODE_CODES = {TunnelMode.RESEED: 1, TunnelMode.OTP: 2}


@dataclass(frozen=True)
class TunnelPolicy:
    mode: TunnelMode = TunnelMode.RESEED
    rekey_interval: float = 60.0
    rekey_kbytes: float | None = None
    key_bits_per_session: int = 256
    qkd_blocks_per_negotiation: int = 1
    negotiation_timeout: float = 120.0
    max_retries: int = 3
    otp_pad_bits: int = 1 << 16
    tag_bits: int = 64

    def __post_init__(self):
        object.__setattr__(self, "mode", TunnelMode(self.mode))
        if self.mode is TunnelMode.RESEED and self.key_bits_per_session not in (128, 192, 256):
            raise ConfigError("reseed mode needs key_bits_per_session in {128, 192, 256}")
        if self.key_bits_per_session < 1 or self.otp_pad_bits < 1:
            raise ConfigError("key sizes must be positive")
        if self.rekey_interval <= 0:
            raise ConfigError("rekey_interval must be > 0")
        if self.rekey_kbytes is not None and self.rekey_kbytes <= 0:
            raise ConfigError("rekey_kbytes must be > 0")
        if self.qkd_blocks_per_negotiation < 1:
            raise ConfigError("qkd_blocks_per_negotiation must be >= 1")
        if self.tag_bits not in (16, 32, 64):
            raise ConfigError("tag_bits must be 16, 32 or 64")

    @property
    def material_bits(self) -> int:
        return self.otp_pad_bits if self.mode is TunnelMode.OTP else self.key_bits_per_session


# -- key sources ------------------------------------------------------------


@dataclass
class Material:
    local: np.ndarray
    peer: np.ndarray
    block_ids: list[int]


class PoolPairSource:
    """Both ends of one QKD link: draws identical bits from each side's pool."""

    def __init__(self, local: KeyPool, peer: KeyPool):
        self.local, self.peer = local, peer

    def take(self, bits: int, min_blocks: int = 1) -> Material:
        blocks = [b for b in self.local.blocks() if b.status.value == "available" and b.remaining]
        fresh = [i for i, b in enumerate(blocks) if Purpose.TUNNEL not in b.purposes]
        if len(fresh) < min_blocks:
            raise KeyStarvation(f"need {min_blocks} fresh blocks, pool has {len(fresh)}")
        # FIFO draw must reach into min_blocks blocks no earlier session touched
        last = fresh[min_blocks - 1]
        span = sum(b.remaining for b in blocks[:last]) + 1
        need = max(bits, span)
        if min(self.local.available_bits(), self.peer.available_bits()) < need:
            raise KeyStarvation(f"tunnel needs {need} bits, pool offers {self.local.available_bits()}")
        a = self.local.reserve(need, Purpose.TUNNEL)
        b = self.peer.reserve(need, Purpose.TUNNEL)
        return Material(a.bits, b.bits, a.block_ids)


class RelaySource:
    """End-to-end keys fetched over the trusted-relay network."""

    def __init__(self, graph: RelayGraph, src: str, dst: str, rng: np.random.Generator):
        self.graph, self.src, self.dst, self.rng = graph, src, dst, rng
        self._next_id = 0

    def take(self, bits: int, min_blocks: int = 1) -> Material:
        locals_, peers, ids = [], [], []
        per = -(-bits // min_blocks)
        for _ in range(min_blocks):
            got = request_key(self.graph, self.src, self.dst, per, self.rng)
            if isinstance(got, str):
                for arr in locals_ + peers:
                    arr[:] = 0
                raise KeyStarvation(f"relay: {got}")
            locals_.append(got[0])
            peers.append(got[1])
            self._next_id += 1
            ids.append(self._next_id)
        return Material(np.concatenate(locals_), np.concatenate(peers), ids)


# -- wire payloads ------------------------------------------------------------


@dataclass(frozen=True)
class CtrlMessage:
    op: int
    mode: TunnelMode = TunnelMode.RESEED
    key_bits: int = 0
    block_ids: tuple[int, ...] = ()
    nonce: bytes = bytes(NONCE_LEN)
    body: bytes = b""  # confirm ciphertext

    def to_payload(self) -> bytes:
        if self.op == OP_CONFIRM:
            return bytes([self.op]) + self.body
        ids = b"".join(struct.pack(">Q", i) for i in self.block_ids)
        return struct.pack(">BBII", self.op, MODE_CODES[self.mode], self.key_bits, len(self.block_ids)) + ids + self.nonce

    @classmethod
    def from_payload(cls, payload: bytes) -> "CtrlMessage":
        if not payload:
            raise DecodeError("empty TUNNEL_CTRL payload")
        op = payload[0]
        if op == OP_CONFIRM:
            return cls(op, body=payload[1:])
        if op not in (OP_OFFER, OP_ACCEPT, OP_REKEY) or len(payload) < 10:
            raise DecodeError(f"bad TUNNEL_CTRL op {op} or truncated payload")
        _, mode, key_bits, count = struct.unpack_from(">BBII", payload)
        if len(payload) != 10 + 8 * count + NONCE_LEN:
            raise DecodeError("TUNNEL_CTRL length disagrees with block count")
        ids = struct.unpack_from(f">{count}Q", payload, 10)
        modes = {v: k for k, v in MODE_CODES.items()}
        if mode not in modes:
            raise DecodeError(f"unknown tunnel mode {mode}")
        return cls(op, modes[mode], key_bits, tuple(ids), payload[10 + 8 * count :])


def data_payload(seq: int, ciphertext: bytes) -> bytes:
    return struct.pack(">Q", seq) + ciphertext


def parse_data_payload(payload: bytes) -> tuple[int, bytes]:
    if len(payload) < 8:
        raise DecodeError("TUNNEL_DATA shorter than its sequence field")
    return struct.unpack_from(">Q", payload)[0], payload[8:]


# -- per-gateway state ----------------------------------------------------------


def derive_key(material: np.ndarray, nonce_i: bytes, nonce_r: bytes, mode: TunnelMode, nbytes: int) -> bytes:
    kdf = HKDF(hashes.SHA256(), nbytes, salt=nonce_i + nonce_r, info=KDF_INFO + mode.value.encode())
    return kdf.derive(pack_le(material))


def _confirm_key(key: bytes) -> bytes:
    return HKDF(hashes.SHA256(), 32, salt=None, info=b"qkdf confirm").derive(key)


@dataclass
class SessionState:
    """One gateway's view of the tunnel."""

    key: bytes | None = None
    previous: bytes | None = None
    pad: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint8))
    pad_cursor: int = 0
    pad_base: int = 0  # absolute pad offset of pad[0]
    started_at: float = 0.0
    bytes_sealed: int = 0
    confirmed: bool = False
    epoch: int = 0
    seq: int = 0
    expect_seq: int = 0
    block_ids: list[int] = field(default_factory=list)
    pad_log: list[tuple[int, int]] = field(default_factory=list)

    def destroy(self) -> None:
        self.pad[:] = 0
        self.pad = np.zeros(0, dtype=np.uint8)
        self.key = self.previous = None
        self.confirmed = False

    def pad_left(self) -> int:
        return self.pad_base + self.pad.size - self.pad_cursor

    def take_pad(self, nbits: int) -> np.ndarray:
        if self.pad_left() < nbits:
            raise KeyStarvation(f"pad has {self.pad_left()} bits, message needs {nbits}")
        lo = self.pad_cursor - self.pad_base
        seg = self.pad[lo : lo + nbits].copy()
        self.pad[lo : lo + nbits] = 0
        self.pad_log.append((self.pad_cursor, self.pad_cursor + nbits))
        self.pad_cursor += nbits
        if lo + nbits > 1 << 20:
            self.pad = self.pad[lo + nbits :]
            self.pad_base += lo + nbits
        return seg


def _xor(data: bytes, pad_bits: np.ndarray) -> bytes:
    stream = np.packbits(pad_bits, bitorder="little").tobytes()
    return (np.frombuffer(data, np.uint8) ^ np.frombuffer(stream, np.uint8)).tobytes()


def _gcm_nonce(seq: int, sender: int) -> bytes:
    # the sender id keeps the two directions' nonces apart under one key
    return struct.pack(">IQ", sender, seq)


def seal(data: bytes, state: SessionState, mode: TunnelMode, tag_bits: int = 64, sender: int = 0) -> bytes:
    """Encrypt one message; returns the TUNNEL_DATA payload."""
    if not state.confirmed:
        raise ProtocolError("tunnel session not confirmed")
    seq = state.seq
    if mode is TunnelMode.OTP:
        need = key_bits_per_tag(tag_bits) + 8 * len(data)
        if state.pad_left() < need:
            raise KeyStarvation(f"pad has {state.pad_left()} bits, message needs {need}")
        tag_key = state.take_pad(key_bits_per_tag(tag_bits))
        ct = _xor(data, state.take_pad(8 * len(data))) if data else b""
        tag = tag_from_key(struct.pack(">Q", seq) + ct, tag_key, tag_bits)
        body = ct + tag.to_bytes(tag_bits // 8, "big")
    else:
        body = AESGCM(state.key).encrypt(_gcm_nonce(seq, sender), data, struct.pack(">Q", seq))
    state.seq += 1
    state.bytes_sealed += len(data)
    return data_payload(seq, body)


def open_(payload: bytes, state: SessionState, mode: TunnelMode, tag_bits: int = 64, sender: int = 0) -> bytes:
    """Inverse of ``seal``; raises IntegrityError on any tampering."""
    if not state.confirmed:
        raise ProtocolError("tunnel session not confirmed")
    seq, body = parse_data_payload(payload)
    if mode is TunnelMode.OTP:
        if seq != state.expect_seq:
            raise IntegrityError(f"sequence {seq} out of order, expected {state.expect_seq}")
        nt = tag_bits // 8
        if len(body) < nt:
            raise IntegrityError("ciphertext shorter than tag")
        ct, tag = body[:-nt], int.from_bytes(body[-nt:], "big")
        if state.pad_left() < key_bits_per_tag(tag_bits) + 8 * len(ct):
            raise IntegrityError("message longer than remaining pad")
        tag_key = state.take_pad(key_bits_per_tag(tag_bits))
        pad = state.take_pad(8 * len(ct))
        state.expect_seq = seq + 1
        if tag_from_key(struct.pack(">Q", seq) + ct, tag_key, tag_bits) != tag:
            raise IntegrityError("OTP tag mismatch")
        return _xor(ct, pad) if ct else b""
    nonce = _gcm_nonce(seq, sender)
    aad = struct.pack(">Q", seq)
    try:
        out = AESGCM(state.key).decrypt(nonce, body, aad)
    except InvalidTag:
        if state.previous is None:
            raise IntegrityError("AEAD tag mismatch") from None
        try:
            return AESGCM(state.previous).decrypt(nonce, body, aad)
        except InvalidTag:
            raise IntegrityError("AEAD tag mismatch") from None
    # first packet under the new key retires the old one
    state.previous = None
    return out


# -- the tunnel -------------------------------------------------------------------


@dataclass
class NegotiationRecord:
    epoch: int
    time: float
    outcome: str
    block_ids: list[int]
    attempts: int


class Tunnel:
    """Both gateways of one tunnel driven over an authenticated public channel.

    ``clock`` is simulated time in seconds; callers move it with ``advance``.
    """

    def __init__(
        self,
        name: str,
        policy: TunnelPolicy,
        source,
        channel: InProcessChannel,
        nonce_source: Callable[[int], bytes] | None = None,
    ):
        self.name = name
        self.policy = policy
        self.source = source
        self.channel = channel
        self.ends = {"A": SessionState(), "B": SessionState()}
        self.clock = 0.0
        self.up = False
        self.down_reason = ""
        self.pending_since: float | None = None
        self.rollovers = 0
        self.negotiations: list[NegotiationRecord] = []
        self.data_messages = 0
        self.bytes_delivered = 0
        self.confirm_failures = 0
        self.fault: Callable[[np.ndarray], None] | None = None
        self._nonce = nonce_source or os.urandom

    # -- negotiation -------------------------------------------------------

    def negotiate(self, min_bits: int = 0) -> str:
        """Run offer/accept/confirm; returns 'ok', 'deferred: ...' or 'failed: ...'.

        ``min_bits`` raises the amount of fresh material drawn (OTP pad top-up).
        """
        epoch = self.ends["A"].epoch + 1
        for attempt in range(1, self.policy.max_retries + 1):
            try:
                bits = max(self.policy.material_bits, min_bits)
                mat = self.source.take(bits, self.policy.qkd_blocks_per_negotiation)
            except KeyStarvation as exc:
                if self.pending_since is None:
                    self.pending_since = self.clock
                reason = f"deferred: {exc}"
                if self.clock - self.pending_since > self.policy.negotiation_timeout:
                    self._go_down(f"negotiation timed out ({exc})")
                    reason = f"failed: {self.down_reason}"
                self.negotiations.append(NegotiationRecord(epoch, self.clock, reason, [], attempt))
                return reason
            if self.fault is not None:
                self.fault(mat.peer)
            if self._exchange(mat, epoch):
                self.pending_since = None
                self.up = True
                self.negotiations.append(NegotiationRecord(epoch, self.clock, "ok", mat.block_ids, attempt))
                return "ok"
            self.confirm_failures += 1
            log.warning("tunnel %s: key confirmation failed (attempt %d)", self.name, attempt)
        self._go_down("repeated key-confirmation failure")
        self.negotiations.append(NegotiationRecord(epoch, self.clock, "failed", [], self.policy.max_retries))
        return f"failed: {self.down_reason}"

    def _go_down(self, reason: str) -> None:
        self.up = False
        self.down_reason = reason
        for end in self.ends.values():
            end.confirmed = False
        log.error("tunnel %s down: %s", self.name, reason)

    def _exchange(self, mat: Material, epoch: int) -> bool:
        pol = self.policy
        op = OP_OFFER if epoch == 1 else OP_REKEY
        n_i = self._nonce(NONCE_LEN)
        offer = CtrlMessage(op, pol.mode, mat.local.size, tuple(mat.block_ids), n_i)
        got = CtrlMessage.from_payload(self.channel.send("A->B", MsgType.TUNNEL_CTRL, offer.to_payload()))
        n_r = self._nonce(NONCE_LEN)
        accept = CtrlMessage(OP_ACCEPT, got.mode, got.key_bits, got.block_ids, n_r)
        back = CtrlMessage.from_payload(self.channel.send("B->A", MsgType.TUNNEL_CTRL, accept.to_payload()))
        if back.block_ids != offer.block_ids or back.mode is not pol.mode:
            raise ProtocolError("accept does not echo the offer")

        key_a = derive_key(mat.local, n_i, back.nonce, pol.mode, 32)
        key_b = derive_key(mat.peer, got.nonce, n_r, pol.mode, 32)
        ok = self._confirm(key_a, key_b)
        new = {"A": (key_a, mat.local), "B": (key_b, mat.peer)}
        if not ok:
            mat.local[:] = 0
            mat.peer[:] = 0
            return False
        for side, (key, material) in new.items():
            st = self.ends[side]
            if pol.mode is TunnelMode.OTP:
                st.pad = np.concatenate((st.pad[st.pad_cursor - st.pad_base :], material))
                st.pad_base = st.pad_cursor
            else:
                st.previous = st.key
                st.key = key[: pol.key_bits_per_session // 8]
            material[:] = 0
            st.confirmed = True
            st.started_at = self.clock
            st.bytes_sealed = 0
            st.epoch = epoch
            st.block_ids = list(mat.block_ids)
        return True

    def _confirm(self, key_a: bytes, key_b: bytes) -> bool:
        """Each side encrypts a fixed plaintext for the other; both must decrypt."""
        ok = True
        for direction, mine, theirs in (("A->B", key_a, key_b), ("B->A", key_b, key_a)):
            nonce = self._nonce(12)
            ct = AESGCM(_confirm_key(mine)).encrypt(nonce, CONFIRM_PLAINTEXT + direction.encode(), None)
            got = CtrlMessage.from_payload(
                self.channel.send(direction, MsgType.TUNNEL_CTRL, CtrlMessage(OP_CONFIRM, body=nonce + ct).to_payload())
            )
            try:
                pt = AESGCM(_confirm_key(theirs)).decrypt(got.body[:12], got.body[12:], None)
                ok = ok and pt == CONFIRM_PLAINTEXT + direction.encode()
            except InvalidTag:
                ok = False
        return ok

    # -- lifetime ----------------------------------------------------------

    def lifetime_expired(self) -> bool:
        st = self.ends["A"]
        if self.policy.mode is TunnelMode.OTP:
            return False
        if self.clock - st.started_at >= self.policy.rekey_interval:
            return True
        return self.policy.rekey_kbytes is not None and st.bytes_sealed >= self.policy.rekey_kbytes * 1024

    def rollover(self) -> str:
        outcome = self.negotiate()
        if outcome == "ok":
            self.rollovers += 1
        return outcome

    def advance(self, dt: float) -> None:
        self.clock += dt
        self.tick()

    def tick(self) -> None:
        if not self.up:
            if not self.down_reason:
                self.negotiate()
            return
        if self.lifetime_expired():
            self.rollover()

    # -- traffic -------------------------------------------------------------

    def _ready_for(self, nbytes: int) -> None:
        if not self.up:
            raise KeyStarvation(f"tunnel {self.name} is not up: {self.down_reason or 'not negotiated'}")
        if self.lifetime_expired():
            if self.rollover() != "ok":
                raise KeyStarvation(f"tunnel {self.name}: rekey pending, traffic refused")
        if self.policy.mode is TunnelMode.OTP:
            need = key_bits_per_tag(self.policy.tag_bits) + 8 * nbytes
            short = need - self.ends["A"].pad_left()
            if short > 0:
                if self.negotiate(short) != "ok":
                    raise KeyStarvation(f"tunnel {self.name}: pad exhausted, message refused")

    def seal(self, data: bytes, direction: str = "A->B") -> bytes:
        """Seal at the sending gateway; the payload may be delivered later."""
        self._ready_for(len(data))
        src = direction.split("->")[0]
        if self.policy.mode is TunnelMode.OTP and src != "A":
            raise ConfigError("OTP tunnels carry traffic A->B; open a second tunnel for the reverse path")
        return seal(data, self.ends[src], self.policy.mode, self.policy.tag_bits, int(src == "B"))

    def deliver(self, payload: bytes, direction: str = "A->B") -> bytes:
        src, dst = direction.split("->")
        wire = self.channel.send(direction, MsgType.TUNNEL_DATA, payload)
        self.data_messages += 1
        out = open_(wire, self.ends[dst], self.policy.mode, self.policy.tag_bits, int(src == "B"))
        self.bytes_delivered += len(out)
        return out

    def send(self, data: bytes, direction: str = "A->B") -> bytes:
        return self.deliver(self.seal(data, direction), direction)

    def pad_intervals(self, side: str = "A") -> list[tuple[int, int]]:
        return list(self.ends[side].pad_log)
