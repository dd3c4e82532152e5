"""BB84 sifting exchange.

Bob announces, per pulse, whether he got a usable click and in which basis
(run-length encoded); Alice answers with a bitmask over Bob's detections
marking basis matches.  Values never leave either endpoint.
"""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass

import numpy as np

from .bits import DecodeError, decode_varint, encode_varint, pack_be, unpack_be
from .errors import ProtocolError
from .qchannel import Detections, Frame

NO_DETECTION = 0
DETECTED_BASIS0 = 1
DETECTED_BASIS1 = 2

MAX_RUN = 2**32 - 1


def rle_encode(symbols) -> bytes:
    """Run-length encode 2-bit symbols as ``{symbol byte}{varint length}`` records."""
    sym = np.asarray(symbols, dtype=np.uint8)
    if sym.size == 0:
        raise ValueError("cannot encode an empty symbol sequence")
    if sym.max() > 3:
        raise ValueError("symbols must fit in 2 bits")
    starts = np.concatenate(([0], np.nonzero(sym[1:] != sym[:-1])[0] + 1))
    lengths = np.diff(np.concatenate((starts, [sym.size])))
    out = bytearray()
    for s, length in zip(sym[starts].tolist(), lengths.tolist()):
        while length > 0:
            chunk = min(length, MAX_RUN)
            out.append(s)
            out += encode_varint(chunk)
            length -= chunk
    return bytes(out)


def rle_decode(data: bytes) -> np.ndarray:
    syms, lens = [], []
    pos = 0
    while pos < len(data):
        s = data[pos]
        if s > 3:
            raise DecodeError(f"bad run symbol byte {s:#x}")
        length, pos = decode_varint(data, pos + 1)
        if length == 0:
            raise DecodeError("zero-length run")
        syms.append(s)
        lens.append(length)
    return np.repeat(np.array(syms, dtype=np.uint8), np.array(lens, dtype=np.int64))


@dataclass(frozen=True)
class SiftProposal:
    frame_id: int
    detections: bytes  # RLE records

    def symbols(self) -> np.ndarray:
        return rle_decode(self.detections)

    def to_payload(self) -> bytes:
        return struct.pack(">Q", self.frame_id) + self.detections

    @classmethod
    def from_payload(cls, payload: bytes) -> "SiftProposal":
        if len(payload) < 8:
            raise DecodeError("short SIFT_PROPOSE payload")
        return cls(struct.unpack(">Q", payload[:8])[0], bytes(payload[8:]))


@dataclass(frozen=True)
class SiftResponse:
    frame_id: int
    accepted: np.ndarray  # bool, one entry per Bob detection in detection order

    def to_payload(self) -> bytes:
        return struct.pack(">QI", self.frame_id, self.accepted.size) + pack_be(self.accepted.astype(np.uint8))

    @classmethod
    def from_payload(cls, payload: bytes) -> "SiftResponse":
        if len(payload) < 12:
            raise DecodeError("short SIFT_RESPONSE payload")
        frame_id, count = struct.unpack(">QI", payload[:12])
        body = payload[12:]
        if len(body) != (count + 7) // 8:
            raise ProtocolError("sift mask length disagrees with detection count")
        bits = unpack_be(body)
        if bits[count:].any():
            raise ProtocolError("sift mask has bits set beyond Bob's detections")
        return cls(frame_id, bits[:count].astype(bool))


def _as_detections(detections) -> Detections:
    if isinstance(detections, Detections):
        return detections
    return Detections.from_records(detections)


def build_proposal(detections, frame_id: int | None = None) -> SiftProposal:
    """Encode Bob's per-pulse outcome; double clicks count as no detection."""
    det = _as_detections(detections)
    if len(det) == 0:
        raise ProtocolError("malformed frame: no pulses")
    sym = np.where(det.usable, det.basis.astype(np.uint8) + 1, NO_DETECTION).astype(np.uint8)
    return SiftProposal(det.frame_id if frame_id is None else frame_id, rle_encode(sym))


def alice_sift(proposal: SiftProposal, frame: Frame) -> tuple[SiftResponse, np.ndarray]:
    if proposal.frame_id != frame.frame_id:
        raise ProtocolError(f"unknown frame_id {proposal.frame_id}")
    sym = proposal.symbols()
    if sym.size != len(frame):
        raise ProtocolError(f"proposal covers {sym.size} pulses, frame has {len(frame)}")
    if (sym == 3).any():
        raise ProtocolError("reserved sift symbol")
    det_idx = np.nonzero(sym != NO_DETECTION)[0]
    accepted = (sym[det_idx] - 1) == frame.basis[det_idx]
    bits = frame.value[det_idx[accepted]].astype(np.uint8)
    return SiftResponse(proposal.frame_id, accepted), bits


def bob_sift(response: SiftResponse, detections) -> np.ndarray:
    det = _as_detections(detections)
    if response.frame_id != det.frame_id:
        raise ProtocolError(f"sift response for frame {response.frame_id}, expected {det.frame_id}")
    det_idx = np.nonzero(det.usable)[0]
    if response.accepted.size != det_idx.size:
        # a mask bit beyond Bob's detections names a pulse he never saw
        raise ProtocolError("sift mask references undetected pulses")
    return det.value[det_idx[response.accepted]].astype(np.uint8)


def sifted_indices(response: SiftResponse, detections) -> np.ndarray:
    det = _as_detections(detections)
    return np.nonzero(det.usable)[0][response.accepted]


class FrameStore:
    """Alice's per-frame store; ``take`` is an atomic lookup-then-delete."""

    def __init__(self):
        self._frames: dict[int, Frame] = {}
        self._lock = threading.Lock()

    def put(self, frame: Frame) -> None:
        with self._lock:
            if frame.frame_id in self._frames:
                raise ProtocolError(f"duplicate frame_id {frame.frame_id}")
            self._frames[frame.frame_id] = frame

    def take(self, frame_id: int) -> Frame:
        with self._lock:
            try:
                return self._frames.pop(frame_id)
            except KeyError:
                raise ProtocolError(f"unknown frame_id {frame_id}") from None

    def __len__(self) -> int:
        return len(self._frames)
