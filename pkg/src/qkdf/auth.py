"""Wegman-Carter authentication of public-channel messages.

Each tag spends a fresh 2w-bit key segment: w bits pick the evaluation
point k of a polynomial hash over GF(2^w), the other w bits are a one-time
mask.  The message is split into w-bit blocks, a length block is appended,
and the tag is ``sum(block_i * k^(L-i+1)) xor mask``.  A forger without the
segment succeeds with probability at most (L+1)/2^w.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import gf2
from .bits import bits_to_int
from .errors import AuthDesync, AuthStarvation

TAG_BITS = 64
DEFAULT_PREPOSITIONED_BITS = 8192

MODULI = {
    16: (16, 5, 3, 2, 0),
    32: (32, 7, 6, 2, 0),
    64: (64, 4, 3, 1, 0),
}


class Origin(str, Enum):
    PREPOSITIONED = "prepositioned"
    QKD_REPLENISHED = "qkd_replenished"


@dataclass(frozen=True)
class AuthTag:
    tag: int
    key_offset: int

    def to_bytes(self) -> bytes:
        return self.key_offset.to_bytes(8, "big") + self.tag.to_bytes(8, "big")

    @classmethod
    def from_bytes(cls, data: bytes) -> "AuthTag":
        return cls(int.from_bytes(data[8:16], "big"), int.from_bytes(data[:8], "big"))


class AuthKeyPool:
    """Append-only pool of authentication key bits consumed strictly in order."""

    def __init__(self, bits=None, origin: Origin = Origin.PREPOSITIONED, low_watermark: int = 1024):
        self._bits = np.zeros(0, dtype=np.uint8)
        self._base = 0  # absolute offset of self._bits[0]
        self.watermark = 0
        self.segments: list[tuple[int, int, Origin]] = []
        self.consumed: list[tuple[int, int]] = []
        self.low_watermark = low_watermark
        self.starvation_count = 0
        self._lock = threading.Lock()
        if bits is not None:
            self.replenish(bits, origin)

    @property
    def total(self) -> int:
        return self._base + self._bits.size

    def available(self) -> int:
        return self.total - self.watermark

    def is_low(self) -> bool:
        return self.available() < self.low_watermark

    def replenish(self, bits, origin: Origin = Origin.QKD_REPLENISHED) -> None:
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.size == 0:
            return
        with self._lock:
            start = self.total
            self._bits = np.concatenate((self._bits, bits))
            self.segments.append((start, start + bits.size, Origin(origin)))

    def take(self, nbits: int, offset: int | None = None) -> tuple[int, np.ndarray]:
        """Consume ``nbits`` at the watermark; ``offset`` must match it if given."""
        with self._lock:
            if offset is not None and offset != self.watermark:
                raise AuthDesync(f"key offset {offset} does not match watermark {self.watermark}")
            if self.available() < nbits:
                self.starvation_count += 1
                raise AuthStarvation(f"auth pool has {self.available()} bits, need {nbits}")
            start = self.watermark - self._base
            seg = self._bits[start : start + nbits].copy()
            self._bits[start : start + nbits] = 0
            used = (self.watermark, self.watermark + nbits)
            self.consumed.append(used)
            self.watermark += nbits
            if self.watermark - self._base > 1 << 16:
                drop = self.watermark - self._base
                self._bits = self._bits[drop:]
                self._base += drop
            return used[0], seg


def _split_blocks(message: bytes, width: int) -> list[int]:
    nb = width // 8
    padded = message + bytes(-len(message) % nb)
    blocks = [int.from_bytes(padded[i : i + nb], "little") for i in range(0, len(padded), nb)]
    blocks.append(len(message) & ((1 << width) - 1))
    return blocks


# above this many blocks the bit-spread form below beats the nibble loop
_SPREAD_THRESHOLD = 8


def _spread(data: bytes) -> bytes:
    """One byte per bit, LSB first: bit i of ``data`` becomes byte i."""
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little").tobytes()


def _poly_hash_spread(padded: bytes, point: int, width: int) -> int:
    # With every bit in its own byte, an ordinary integer product holds the
    # per-coefficient counts (at most width <= 64 < 256) without carries
    # crossing into the next coefficient, so masking to bit 0 of each byte
    # leaves the carry-less product.
    nb = width // 8
    sp = _spread(padded)
    P = int.from_bytes(_spread(point.to_bytes(nb, "little")), "little")
    parity = int.from_bytes(b"\x01" * (2 * width), "little")
    low = [8 * k for k in MODULI[width] if k != width]
    top = 8 * width
    mask = (1 << top) - 1
    h = 0
    for i in range(0, len(sp), width):
        prod = ((h ^ int.from_bytes(sp[i : i + width], "little")) * P) & parity
        while prod >> top:
            hi = prod >> top
            prod &= mask
            for k in low:
                prod ^= hi << k
        h = prod
    return int.from_bytes(np.packbits(np.frombuffer(h.to_bytes(width, "little"), dtype=np.uint8), bitorder="little").tobytes(), "little")


def poly_hash(message: bytes, point: int, width: int = TAG_BITS) -> int:
    """Horner evaluation of the padded message blocks and length at ``point``."""
    nb = width // 8
    if len(message) >= _SPREAD_THRESHOLD * nb:
        padded = message + bytes(-len(message) % nb) + (len(message) & ((1 << width) - 1)).to_bytes(nb, "little")
        return _poly_hash_spread(padded, point, width)
    # nibble table of the fixed point, shared by every Horner step
    p2, p4, p8 = point << 1, point << 2, point << 3
    t = (0, point, p2, p2 ^ point, p4, p4 ^ point, p4 ^ p2, p4 ^ p2 ^ point,
         p8, p8 ^ point, p8 ^ p2, p8 ^ p2 ^ point, p8 ^ p4, p8 ^ p4 ^ point, p8 ^ p4 ^ p2, p8 ^ p4 ^ p2 ^ point)  # fmt: skip
    low = [k for k in MODULI[width] if k != width]
    mask = (1 << width) - 1
    h = 0
    for blk in _split_blocks(message, width):
        v = h ^ blk
        prod, shift = 0, 0
        while v:
            prod ^= t[v & 15] << shift
            v >>= 4
            shift += 4
        while prod >> width:
            hi = prod >> width
            prod &= mask
            for k in low:
                prod ^= hi << k
        h = prod
    return h


def tag_from_key(message: bytes, key_bits, width: int = TAG_BITS) -> int:
    key = bits_to_int(key_bits)
    point, mask = key & ((1 << width) - 1), key >> width
    return poly_hash(message, point, width) ^ mask


def key_bits_per_tag(width: int = TAG_BITS) -> int:
    return 2 * width


def wc_tag(message: bytes, pool: AuthKeyPool, width: int = TAG_BITS) -> AuthTag:
    offset, key = pool.take(key_bits_per_tag(width))
    return AuthTag(tag_from_key(message, key, width), offset)


def wc_verify(message: bytes, tag: AuthTag, pool: AuthKeyPool, width: int = TAG_BITS) -> bool:
    _, key = pool.take(key_bits_per_tag(width), offset=tag.key_offset)
    return tag_from_key(message, key, width) == tag.tag


# -- vectorised form for Monte Carlo over many independent keys ------------


def _mul_vec(a: np.ndarray, b: np.ndarray, width: int) -> np.ndarray:
    """Elementwise GF(2^width) product for width <= 32 (uint64 arrays)."""
    if width > 32:
        raise ValueError("vectorised multiply supports widths up to 32")
    red = np.uint64(gf2.exps_to_int(MODULI[width]))
    top = np.uint64(1 << width)
    a = a.astype(np.uint64)
    b = b.astype(np.uint64)
    res = np.zeros_like(a)
    one = np.uint64(1)
    for _ in range(width):
        res ^= np.where(b & one, a, np.uint64(0))
        b = b >> one
        a = a << one
        a = np.where(a & top, a ^ red, a)
    return res


def poly_hash_batch(messages: np.ndarray, points: np.ndarray, width: int, length: int) -> np.ndarray:
    """``messages``: (trials, blocks) of w-bit blocks already split, ``length`` in bytes."""
    h = np.zeros(points.shape, dtype=np.uint64)
    for j in range(messages.shape[1]):
        h = _mul_vec(h ^ messages[:, j].astype(np.uint64), points, width)
    return _mul_vec(h ^ np.uint64(length & ((1 << width) - 1)), points, width)


def split_blocks(message: bytes, width: int) -> list[int]:
    """Message blocks without the trailing length block."""
    return _split_blocks(message, width)[:-1]


@dataclass
class AuthChannel:
    """One endpoint's view: a pool for tagging what it sends, one for verifying what it receives."""

    send_pool: AuthKeyPool
    recv_pool: AuthKeyPool
    width: int = TAG_BITS
    rejected: int = 0
    dropped_unauthenticated: int = 0
    log: list[tuple[str, int, int]] = field(default_factory=list)

    def tag(self, message: bytes) -> AuthTag:
        t = wc_tag(message, self.send_pool, self.width)
        self.log.append(("send", t.key_offset, t.key_offset + key_bits_per_tag(self.width)))
        return t

    def verify(self, message: bytes, tag: AuthTag) -> bool:
        ok = wc_verify(message, tag, self.recv_pool, self.width)
        self.log.append(("recv", tag.key_offset, tag.key_offset + key_bits_per_tag(self.width)))
        if not ok:
            self.rejected += 1
        return ok

    def replenish(self, send_bits, recv_bits) -> None:
        self.send_pool.replenish(send_bits)
        self.recv_pool.replenish(recv_bits)

    def is_low(self) -> bool:
        return self.send_pool.is_low() or self.recv_pool.is_low()

    @classmethod
    def pair(cls, key_bits, width: int = TAG_BITS, low_watermark: int = 1024) -> tuple["AuthChannel", "AuthChannel"]:
        """Split a prepositioned key into the A->B and B->A directions."""
        key = np.asarray(key_bits, dtype=np.uint8)
        half = key.size // 2
        ab, ba = key[:half], key[half : 2 * half]

        def pool(bits):
            return AuthKeyPool(bits, Origin.PREPOSITIONED, low_watermark)

        return cls(pool(ab), pool(ba), width), cls(pool(ba), pool(ab), width)


def intervals_disjoint(intervals) -> bool:
    ordered = sorted(intervals)
    return all(a_end <= b_start for (_, a_end), (b_start, _) in zip(ordered, ordered[1:]))
