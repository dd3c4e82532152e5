"""Interactive parity-subset reconciliation.

Each round Alice picks 64 fresh LFSR seeds and sends the parity of her bits
over each pseudo-random subset; Bob answers with his parities.  Bob then
localises errors in every mismatched set by bisection: he queries a
sub-range, Alice discloses her parity over the set members inside it, and
Bob keeps halving (by member count) until one member is left, which he
flips.  Every parity that has ever been exchanged is kept as a recorded
set; after a flip Bob toggles his recorded parity of every set containing
the flipped bit, which can expose further mismatches in small, cheap
sub-ranges.  A round whose opening exchange shows no mismatch ends the
protocol.

Only Bob's bits change.  ``d`` counts every parity value carried by a
message in either direction; bisection queries carry the marker
``QUERY`` instead of a parity.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import lfsr
from .bits import DecodeError, decode_varint, encode_varint
from .errors import ProtocolError, ReconciliationFailure

EC_SETS = 3
EC_BISECT = 4
EC_DONE = 5

QUERY = 0xFF

DONE_RECONCILED = 0
DONE_ROUND = 1
DONE_FAILED = 2

DEFAULT_SUBSETS = 64
MAX_BLOCK = 2**16


@dataclass
class ParityCheckSet:
    seed: int
    subrange: tuple[int, int] | None = None
    parity: int = 0


# -- payload codecs -------------------------------------------------------


def encode_sets(pairs) -> bytes:
    return b"".join(struct.pack(">IB", seed, parity) for seed, parity in pairs)


def decode_sets(payload: bytes) -> list[tuple[int, int]]:
    if len(payload) % 5:
        raise DecodeError("EC_SETS payload is not a whole number of records")
    out = []
    for off in range(0, len(payload), 5):
        seed, parity = struct.unpack_from(">IB", payload, off)
        if parity > 1:
            raise DecodeError("EC_SETS parity must be 0 or 1")
        out.append((seed, parity))
    return out


def encode_bisect(records) -> bytes:
    out = bytearray()
    for seed, start, end, parity in records:
        out += struct.pack(">I", seed) + encode_varint(start) + encode_varint(end) + bytes([parity])
    return bytes(out)


def decode_bisect(payload: bytes) -> list[tuple[int, int, int, int]]:
    out = []
    pos = 0
    while pos < len(payload):
        if pos + 4 > len(payload):
            raise DecodeError("truncated EC_BISECT record")
        (seed,) = struct.unpack_from(">I", payload, pos)
        start, pos = decode_varint(payload, pos + 4)
        end, pos = decode_varint(payload, pos)
        if pos >= len(payload):
            raise DecodeError("truncated EC_BISECT record")
        parity = payload[pos]
        pos += 1
        if parity not in (0, 1, QUERY):
            raise DecodeError(f"bad EC_BISECT parity byte {parity:#x}")
        out.append((seed, start, end, parity))
    return out


def encode_done(status: int) -> bytes:
    return bytes([status])


def decode_done(payload: bytes) -> int:
    if len(payload) != 1:
        raise DecodeError("EC_DONE payload must be one byte")
    return payload[0]


def count_parities(msg_type: int, payload: bytes) -> int:
    """Number of parity values a reconciliation message discloses."""
    if msg_type == EC_SETS:
        return len(decode_sets(payload))
    if msg_type == EC_BISECT:
        return sum(1 for r in decode_bisect(payload) if r[3] != QUERY)
    return 0


# -- endpoints ------------------------------------------------------------


class _MaskCache:
    def __init__(self, n: int):
        self.n = n
        self._rows: dict[int, np.ndarray] = {}

    def add(self, seeds) -> None:
        fresh = [s for s in seeds if s not in self._rows]
        if fresh:
            for s, row in zip(fresh, lfsr.subset_masks(fresh, self.n)):
                self._rows[s] = row.astype(bool)

    def __getitem__(self, seed: int) -> np.ndarray:
        try:
            return self._rows[seed]
        except KeyError:
            raise ProtocolError(f"unknown subset seed {seed:#x}") from None


def _parity(bits: np.ndarray, mask: np.ndarray, start: int, end: int) -> int:
    return int(np.count_nonzero(bits[start:end][mask[start:end]]) & 1)


class CascadeAlice:
    """Reference side: picks seeds, answers parity queries, never changes its bits."""

    def __init__(self, bits, rng: np.random.Generator, subsets: int = DEFAULT_SUBSETS):
        self.bits = np.asarray(bits, dtype=np.uint8).copy()
        self.rng = rng
        self.subsets = subsets
        self.masks = _MaskCache(max(self.bits.size, 1))
        self.d = 0
        self.rounds = 0
        self.sets: list[ParityCheckSet] = []
        self._round_seeds: list[int] = []

    def start_round(self) -> bytes:
        self.rounds += 1
        seeds = []
        while len(seeds) < self.subsets:
            s = int(self.rng.integers(1, 2**32))
            if s not in seeds:
                seeds.append(s)
        self.masks.add(seeds)
        self._round_seeds = seeds
        pairs = [(s, _parity(self.bits, self.masks[s], 0, self.bits.size)) for s in seeds]
        self.sets.extend(ParityCheckSet(s, None, p) for s, p in pairs)
        self.d += len(pairs)
        return encode_sets(pairs)

    def on_sets_reply(self, payload: bytes) -> None:
        reply = decode_sets(payload)
        if [s for s, _ in reply] != self._round_seeds:
            raise ProtocolError("EC_SETS reply does not match the seeds sent")
        self.d += len(reply)

    def on_bisect(self, payload: bytes) -> bytes:
        out = []
        for seed, start, end, marker in decode_bisect(payload):
            if marker != QUERY:
                raise ProtocolError("unexpected parity in bisection query")
            if not 0 <= start < end <= self.bits.size:
                raise ProtocolError(f"bisection range [{start}, {end}) out of block")
            p = _parity(self.bits, self.masks[seed], start, end)
            self.sets.append(ParityCheckSet(seed, (start, end), p))
            out.append((seed, start, end, p))
        self.d += len(out)
        return encode_bisect(out)


class _SetTable:
    """Bob's recorded sets with both sides' parities."""

    def __init__(self):
        self.seed: list[int] = []
        self.lo: list[int] = []
        self.hi: list[int] = []
        self.pa: list[int] = []
        self.pb: list[int] = []
        self.size: list[int] = []

    def add(self, seed, lo, hi, pa, pb, size) -> int:
        self.seed.append(seed)
        self.lo.append(lo)
        self.hi.append(hi)
        self.pa.append(pa)
        self.pb.append(pb)
        self.size.append(size)
        return len(self.seed) - 1

    def __len__(self) -> int:
        return len(self.seed)

    def mismatched(self) -> list[int]:
        pa = np.fromiter(self.pa, dtype=np.uint8, count=len(self))
        pb = np.fromiter(self.pb, dtype=np.uint8, count=len(self))
        idx = np.nonzero(pa != pb)[0]
        sizes = np.fromiter(self.size, dtype=np.int64, count=len(self))[idx]
        return idx[np.lexsort((idx, sizes))].tolist()


@dataclass
class _Bisection:
    set_id: int
    seed: int
    members: np.ndarray  # sorted member positions inside the current range
    lo: int
    hi: int
    pa: int  # Alice's parity over the current range
    query_end: int = 0


class CascadeBob:
    """Correcting side: compares parities, drives bisection, flips bits."""

    def __init__(self, bits, batch_policy: str = "adaptive", bulk_after: int | None = None):
        self.bits = np.asarray(bits, dtype=np.uint8).copy()
        self.masks = _MaskCache(max(self.bits.size, 1))
        self.table = _SetTable()
        self.d = 0
        self.flips: list[int] = []
        self.batch_policy = batch_policy
        # past this many flips the block is beyond saving: bisect every
        # mismatched set at once, trading disclosure for fewer messages
        self.bulk_after = bulk_after
        self._active: list[_Bisection] = []
        self._round_clean = False
        self._batch_limit = 0
        self._located: set[int] = set()
        self._attempts = 0
        self.rounds = 0

    # round opening
    def on_sets(self, payload: bytes) -> bytes:
        pairs = decode_sets(payload)
        self.rounds += 1
        self.masks.add([s for s, _ in pairs])
        n = self.bits.size
        reply = []
        for seed, pa in pairs:
            mask = self.masks[seed]
            pb = _parity(self.bits, mask, 0, n)
            self.table.add(seed, 0, n, pa, pb, int(np.count_nonzero(mask)))
            reply.append((seed, pb))
        self.d += 2 * len(pairs)
        self._round_clean = all(pa == pb for (_, pa), (_, pb) in zip(pairs, reply))
        self._batch_limit = len(self.table.mismatched())
        return encode_sets(reply)

    def next_message(self) -> tuple[int, bytes]:
        """Either an EC_BISECT query batch or EC_DONE closing the round."""
        while not self._active:
            if not self._start_batch():
                return EC_DONE, encode_done(DONE_RECONCILED if self._round_clean else DONE_ROUND)
        records = []
        for b in self._active:
            half = b.members.size // 2
            b.query_end = int(b.members[half])
            records.append((b.seed, b.lo, b.query_end, QUERY))
        return EC_BISECT, encode_bisect(records)

    def on_bisect_reply(self, payload: bytes) -> None:
        replies = decode_bisect(payload)
        if len(replies) != len(self._active):
            raise ProtocolError("bisection reply count mismatch")
        still = []
        for b, (seed, start, end, pa_left) in zip(self._active, replies):
            if (seed, start, end) != (b.seed, b.lo, b.query_end) or pa_left == QUERY:
                raise ProtocolError("bisection reply does not answer the query")
            self.d += 1
            half = b.members.size // 2
            left, right = b.members[:half], b.members[half:]
            mask = self.masks[seed]
            pb_left = _parity(self.bits, mask, b.lo, end)
            pb_right = _parity(self.bits, mask, end, b.hi)
            pa_right = b.pa ^ pa_left
            self.table.add(seed, b.lo, end, pa_left, pb_left, left.size)
            self.table.add(seed, end, b.hi, pa_right, pb_right, right.size)
            if pa_left != pb_left:
                b.members, b.hi, b.pa = left, end, pa_left
            elif pa_right != pb_right:
                b.members, b.lo, b.pa = right, end, pa_right
            else:
                raise ProtocolError("bisection bottomed out with no disagreement")
            if b.members.size == 1:
                self._located.add(int(b.members[0]))
            else:
                still.append(b)
        self._active = still
        if not self._active:
            self._apply_flips()

    # internals
    def _start_batch(self) -> bool:
        self._located = set()
        todo = self.table.mismatched()
        if not todo:
            return False
        limit = len(todo) if self.batch_policy == "all" else max(1, min(self._batch_limit, len(todo)))
        # smallest first; nested ranges of one seed would locate the same error
        taken: dict[int, list[tuple[int, int]]] = {}
        chosen = 0
        for set_id in todo:
            if chosen == limit:
                break
            seed = self.table.seed[set_id]
            lo, hi = self.table.lo[set_id], self.table.hi[set_id]
            spans = taken.setdefault(seed, [])
            if any(lo < h and l < hi for l, h in spans):
                continue
            spans.append((lo, hi))
            chosen += 1
            mask = self.masks[seed]
            members = lo + np.nonzero(mask[lo:hi])[0]
            if members.size == 0:
                raise ProtocolError("mismatched parity over an empty set")
            if members.size == 1:
                self._located.add(int(members[0]))
                continue
            self._active.append(_Bisection(set_id, seed, members, lo, hi, self.table.pa[set_id]))
        self._attempts = chosen
        if not self._active:
            self._apply_flips()
        return True

    def _apply_flips(self) -> None:
        located = sorted(self._located)
        if len(self.flips) + len(located) > self.bits.size:
            raise ProtocolError("more flips than bits: peers disagree on the recorded sets")
        seeds = np.fromiter(self.table.seed, dtype=np.int64, count=len(self.table))
        lo = np.fromiter(self.table.lo, dtype=np.int64, count=len(self.table))
        hi = np.fromiter(self.table.hi, dtype=np.int64, count=len(self.table))
        toggle = np.zeros(len(self.table), dtype=np.uint8)
        uniq, inverse = np.unique(seeds, return_inverse=True)
        for j in located:
            self.bits[j] ^= 1
            member = np.array([self.masks[int(s)][j] for s in uniq])[inverse]
            toggle ^= (member & (lo <= j) & (j < hi)).astype(np.uint8)
        for i in np.nonzero(toggle)[0]:
            self.table.pb[i] ^= 1
        self.flips.extend(located)
        if self.bulk_after is not None and len(self.flips) >= self.bulk_after:
            self.batch_policy = "all"
        if self.batch_policy == "adaptive":
            found = len(located)
            self._batch_limit = self._attempts * 2 if found == self._attempts else max(1, found // 2)
        self._located = set()


@dataclass
class ReconcileResult:
    alice_bits: np.ndarray
    bob_bits: np.ndarray
    d: int
    e_detected: int
    rounds: int
    messages: list[tuple[str, int, bytes]] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return bool(np.array_equal(self.alice_bits, self.bob_bits))


Send = Callable[[str, int, bytes], bytes]


def _passthrough(direction: str, msg_type: int, payload: bytes) -> bytes:
    return payload


def run_session(alice: CascadeAlice, bob: CascadeBob, send: Send = _passthrough, max_rounds: int = 16) -> int:
    """Drive one block to completion over ``send``; returns rounds used."""
    for rnd in range(1, max_rounds + 1):
        sets = send("A->B", EC_SETS, alice.start_round())
        alice.on_sets_reply(send("B->A", EC_SETS, bob.on_sets(sets)))
        while True:
            mtype, payload = bob.next_message()
            delivered = send("B->A", mtype, payload)
            if mtype == EC_DONE:
                status = decode_done(delivered)
                break
            bob.on_bisect_reply(send("A->B", EC_BISECT, alice.on_bisect(delivered)))
        if status == DONE_RECONCILED:
            return rnd
    send("B->A", EC_DONE, encode_done(DONE_FAILED))
    raise ReconciliationFailure(f"residual mismatches after {max_rounds} rounds")


def reconcile(
    alice_bits,
    bob_bits,
    max_rounds: int = 16,
    rng: np.random.Generator | None = None,
    subsets: int = DEFAULT_SUBSETS,
    send: Send | None = None,
    max_block: int = MAX_BLOCK,
    bulk_after: int | None = None,
) -> ReconcileResult:
    """Reconcile Bob's bits onto Alice's; blocks over ``max_block`` bits are split."""
    a = np.asarray(alice_bits, dtype=np.uint8)
    b = np.asarray(bob_bits, dtype=np.uint8)
    if a.shape != b.shape:
        raise ValueError("bit strings must have equal length")
    if rng is None:
        rng = np.random.default_rng()
    messages: list[tuple[str, int, bytes]] = []

    def capture(direction, mtype, payload):
        delivered = send(direction, mtype, payload) if send else payload
        messages.append((direction, mtype, payload))
        return delivered

    if a.size == 0:
        return ReconcileResult(a.copy(), b.copy(), 0, 0, 0, messages)
    out_b = b.copy()
    d = e = rounds = 0
    for start in range(0, a.size, max_block):
        chunk = slice(start, start + max_block)
        alice = CascadeAlice(a[chunk], rng, subsets)
        bob = CascadeBob(b[chunk], bulk_after=bulk_after)
        rounds += run_session(alice, bob, capture, max_rounds)
        if alice.d != bob.d:
            raise ProtocolError("endpoints disagree on the disclosed-parity count")
        out_b[chunk] = bob.bits
        d += bob.d
        e += len(bob.flips)
    return ReconcileResult(a.copy(), out_b, d, e, rounds, messages)
