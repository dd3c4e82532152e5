"""Distilled-key pool shared between the engine (producer) and its consumers.

A block becomes visible to ``reserve`` only once ``deposit`` has marked it
available; all state changes happen under one lock.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import KeyStarvation


class BlockStatus(str, Enum):
    AVAILABLE = "available"
    RESERVED_AUTH = "reserved_auth"
    DELIVERED = "delivered"
    DESTROYED = "destroyed"


class Purpose(str, Enum):
    AUTH_REPLENISH = "auth_replenish"
    TUNNEL = "tunnel"
    RELAY = "relay"


@dataclass
class KeyBlock:
    block_id: int
    bits: np.ndarray
    entropy_bits: int
    status: BlockStatus = BlockStatus.AVAILABLE
    cursor: int = 0
    purposes: set = field(default_factory=set)

    def __post_init__(self):
        if self.bits.size != self.entropy_bits:
            raise ValueError("key block length must equal its entropy")

    @property
    def remaining(self) -> int:
        return self.entropy_bits - self.cursor


@dataclass(frozen=True)
class Reservation:
    bits: np.ndarray
    pieces: tuple[tuple[int, int, int], ...]  # (block_id, start, end)
    purpose: Purpose

    @property
    def block_ids(self) -> list[int]:
        return [p[0] for p in self.pieces]


class KeyPool:
    def __init__(self, auth_guard_bits: int = 0):
        self._blocks: OrderedDict[int, KeyBlock] = OrderedDict()
        self._lock = threading.Lock()
        self.auth_low = False
        # bits kept back for auth replenishment while the auth pool is low
        self.auth_guard_bits = auth_guard_bits
        self.log: list[tuple[int, int, int, Purpose]] = []
        self.deposited_bits = 0

    def deposit(self, block: KeyBlock) -> None:
        with self._lock:
            if block.block_id in self._blocks:
                raise ValueError(f"duplicate block id {block.block_id}")
            block.status = BlockStatus.AVAILABLE
            self._blocks[block.block_id] = block
            self.deposited_bits += block.entropy_bits

    def available_bits(self) -> int:
        with self._lock:
            return self._available()

    def _available(self) -> int:
        return sum(b.remaining for b in self._blocks.values() if b.status is BlockStatus.AVAILABLE)

    def block(self, block_id: int) -> KeyBlock:
        return self._blocks[block_id]

    def blocks(self) -> list[KeyBlock]:
        return list(self._blocks.values())

    def reserve(self, n_bits: int, purpose: Purpose | str) -> Reservation:
        purpose = Purpose(purpose)
        with self._lock:
            if n_bits == 0:
                return Reservation(np.zeros(0, dtype=np.uint8), (), purpose)
            avail = self._available()
            floor = self.auth_guard_bits if (self.auth_low and purpose is not Purpose.AUTH_REPLENISH) else 0
            if avail - floor < n_bits:
                raise KeyStarvation(f"{purpose.value} needs {n_bits} bits, pool offers {max(avail - floor, 0)}")
            out = np.empty(n_bits, dtype=np.uint8)
            pieces = []
            filled = 0
            for blk in self._blocks.values():
                if filled == n_bits:
                    break
                if blk.status is not BlockStatus.AVAILABLE or blk.remaining == 0:
                    continue
                take = min(blk.remaining, n_bits - filled)
                start = blk.cursor
                out[filled : filled + take] = blk.bits[start : start + take]
                blk.bits[start : start + take] = 0
                blk.cursor += take
                blk.purposes.add(purpose)
                pieces.append((blk.block_id, start, start + take))
                self.log.append((blk.block_id, start, start + take, purpose))
                if blk.remaining == 0:
                    blk.status = (
                        BlockStatus.RESERVED_AUTH if blk.purposes == {Purpose.AUTH_REPLENISH} else BlockStatus.DELIVERED
                    )
                filled += take
            return Reservation(out, tuple(pieces), purpose)

    def destroy(self, block_id: int) -> None:
        with self._lock:
            blk = self._blocks[block_id]
            blk.bits[:] = 0
            blk.status = BlockStatus.DESTROYED

    def consumed_intervals(self, block_id: int | None = None) -> list[tuple[int, int, int]]:
        return [(b, s, e) for b, s, e, _ in self.log if block_id is None or b == block_id]
