"""Weak-coherent BB84 quantum channel model.

Alice emits phase-encoded pulses with Poisson photon numbers, the fiber and
detector reduce them to a single per-pulse detection probability, an
optional eavesdropper interferes, and Bob's two gated detectors (D0 for
value 0, D1 for value 1) report clicks.  Everything is vectorised over a
frame; the random draws are made in a fixed order independent of the
eavesdropper so that runs with different attacks share one random stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

import numpy as np

from .errors import ConfigError, ProtocolError

PULSE_PERIOD_S = 1e-6


@dataclass(frozen=True)
class ChannelParams:
    mu: float = 0.1
    loss_db: float = 3.0
    detector_efficiency: float = 0.5
    dark_count_prob: float = 1e-5
    intrinsic_qber: float = 0.065
    pulse_count: int = 100_000
    rng_seed: int = 0

    def __post_init__(self):
        if not self.mu > 0:
            raise ConfigError(f"mu must be > 0, got {self.mu}")
        if not self.loss_db >= 0:
            raise ConfigError(f"loss_db must be >= 0, got {self.loss_db}")
        for name in ("detector_efficiency", "dark_count_prob", "intrinsic_qber"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if self.pulse_count < 0:
            raise ConfigError("pulse_count must be >= 0")
        if not 0 <= self.rng_seed < 2**64:
            raise ConfigError("rng_seed must be a 64-bit unsigned integer")

    @property
    def transmittance(self) -> float:
        return 10 ** (-self.loss_db / 10)

    @property
    def detect_prob(self) -> float:
        """Probability that a non-empty pulse produces a signal click."""
        return self.transmittance * self.detector_efficiency

    def multi_photon_prob(self) -> float:
        return multi_photon_prob(self.mu)


def multi_photon_prob(mu: float) -> float:
    """P(photon_count >= 2) for Poisson(mu)."""
    return -math.expm1(-mu) - mu * math.exp(-mu)


@dataclass(frozen=True)
class PulseRecord:
    index: int
    basis: int
    value: int
    photon_count: int

    @property
    def phase(self) -> float:
        return self.basis * (math.pi / 2) + self.value * math.pi


@dataclass(frozen=True)
class DetectionRecord:
    index: int
    detected: bool
    basis: int
    value: int | None
    double_click: bool


@dataclass
class Frame:
    """Alice's side of one frame of pulses."""

    basis: np.ndarray
    value: np.ndarray
    photon_count: np.ndarray
    frame_id: int = 0

    def __len__(self) -> int:
        return int(self.basis.size)

    def __getitem__(self, i: int) -> PulseRecord:
        return PulseRecord(int(i), int(self.basis[i]), int(self.value[i]), int(self.photon_count[i]))

    def __iter__(self) -> Iterator[PulseRecord]:
        return (self[i] for i in range(len(self)))

    @property
    def phase(self) -> np.ndarray:
        return self.basis * (np.pi / 2) + self.value * np.pi

    @property
    def duration_s(self) -> float:
        return len(self) * PULSE_PERIOD_S

    def dump(self) -> bytes:
        """Diagnostic dump: one byte per pulse (bit0 basis, bit1 value, bits2-5 photons)."""
        pc = np.minimum(self.photon_count, 15).astype(np.uint8)
        return (self.basis.astype(np.uint8) | (self.value.astype(np.uint8) << 1) | (pc << 2)).tobytes()

    @classmethod
    def load(cls, data: bytes, frame_id: int = 0) -> "Frame":
        raw = np.frombuffer(data, dtype=np.uint8)
        return cls(raw & 1, (raw >> 1) & 1, ((raw >> 2) & 0x0F).astype(np.int64), frame_id)


@dataclass
class Detections:
    """Bob's view of one frame."""

    detected: np.ndarray
    basis: np.ndarray
    value: np.ndarray
    double_click: np.ndarray
    frame_id: int = 0

    def __len__(self) -> int:
        return int(self.detected.size)

    def __getitem__(self, i: int) -> DetectionRecord:
        det = bool(self.detected[i])
        dbl = bool(self.double_click[i])
        value = int(self.value[i]) if det and not dbl else None
        return DetectionRecord(int(i), det, int(self.basis[i]), value, dbl)

    def __iter__(self) -> Iterator[DetectionRecord]:
        return (self[i] for i in range(len(self)))

    @property
    def usable(self) -> np.ndarray:
        return self.detected & ~self.double_click

    @classmethod
    def from_records(cls, records, frame_id: int = 0) -> "Detections":
        records = list(records)
        n = len(records)
        det = np.zeros(n, dtype=bool)
        basis = np.zeros(n, dtype=np.uint8)
        value = np.zeros(n, dtype=np.uint8)
        dbl = np.zeros(n, dtype=bool)
        for pos, r in enumerate(records):
            if r.index != pos:
                raise ProtocolError(f"malformed frame: expected pulse {pos}, got {r.index}")
            det[pos] = r.detected
            basis[pos] = r.basis
            value[pos] = r.value or 0
            dbl[pos] = r.double_click
        return cls(det, basis, value, dbl, frame_id)


class EveKind(str, Enum):
    NONE = "none"
    INTERCEPT_RESEND = "intercept_resend"
    BEAMSPLIT = "beamsplit"


@dataclass(frozen=True)
class EveModel:
    kind: EveKind = EveKind.NONE
    intercept_fraction: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", EveKind(self.kind))
        if not 0.0 <= self.intercept_fraction <= 1.0:
            raise ConfigError("intercept_fraction must be in [0, 1]")


NO_EVE = EveModel()


@dataclass
class EveKnowledge:
    """What the eavesdropper holds per pulse: the basis she measured in and the value she got."""

    kind: EveKind
    index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    basis: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint8))
    value: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint8))

    def __len__(self) -> int:
        return int(self.index.size)


def make_rng(seed: int | np.random.SeedSequence | None) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def generate_frame(params: ChannelParams, rng: np.random.Generator | None = None, frame_id: int = 0) -> Frame:
    if rng is None:
        rng = make_rng(params.rng_seed)
    n = params.pulse_count
    basis = rng.integers(0, 2, n, dtype=np.uint8)
    value = rng.integers(0, 2, n, dtype=np.uint8)
    photons = rng.poisson(params.mu, n)
    return Frame(basis, value, photons, frame_id)


def propagate_and_detect(
    frame: Frame,
    params: ChannelParams,
    eve: EveModel = NO_EVE,
    rng: np.random.Generator | None = None,
) -> tuple[Detections, EveKnowledge]:
    if rng is None:
        rng = make_rng(np.random.SeedSequence([params.rng_seed, 1]))
    n = len(frame)
    # draw order is fixed so the stream does not depend on the attack
    u_tap = rng.random(n)
    eve_basis = rng.integers(0, 2, n, dtype=np.uint8)
    eve_guess = rng.integers(0, 2, n, dtype=np.uint8)
    bob_basis = rng.integers(0, 2, n, dtype=np.uint8)
    u_detect = rng.random(n)
    u_flip = rng.random(n)
    random_value = rng.integers(0, 2, n, dtype=np.uint8)
    dark0 = rng.random(n) < params.dark_count_prob
    dark1 = rng.random(n) < params.dark_count_prob

    nonempty = frame.photon_count >= 1
    state_basis = frame.basis
    state_value = frame.value
    knowledge = EveKnowledge(eve.kind)

    if eve.kind is EveKind.INTERCEPT_RESEND:
        hit = nonempty & (u_tap < eve.intercept_fraction)
        eve_value = np.where(eve_basis == frame.basis, frame.value, eve_guess).astype(np.uint8)
        state_basis = np.where(hit, eve_basis, frame.basis).astype(np.uint8)
        state_value = np.where(hit, eve_value, frame.value).astype(np.uint8)
        idx = np.nonzero(hit)[0]
        knowledge = EveKnowledge(eve.kind, idx, eve_basis[idx], eve_value[idx])
    elif eve.kind is EveKind.BEAMSPLIT:
        # one photon split off each multi-photon pulse, measured after the
        # basis is announced; the remaining photons reach Bob untouched
        hit = (frame.photon_count >= 2) & (u_tap < eve.intercept_fraction)
        idx = np.nonzero(hit)[0]
        knowledge = EveKnowledge(eve.kind, idx, frame.basis[idx].copy(), frame.value[idx].copy())

    signal = nonempty & (u_detect < params.detect_prob)
    matched = bob_basis == state_basis
    noisy = (state_value ^ (u_flip < params.intrinsic_qber)).astype(np.uint8)
    arriving = np.where(matched, noisy, random_value)

    click0 = (signal & (arriving == 0)) | dark0
    click1 = (signal & (arriving == 1)) | dark1
    detected = click0 | click1
    double = click0 & click1
    value = (click1 & ~click0).astype(np.uint8)
    return Detections(detected, bob_basis, value, double, frame.frame_id), knowledge
