"""Bit-string and wire helpers shared by the protocol modules.

Bit strings are ``numpy.uint8`` arrays holding 0/1 values.
"""

from __future__ import annotations

import numpy as np


class DecodeError(ValueError):
    """Malformed wire data."""


def as_bits(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.uint8)
    if arr.ndim != 1:
        raise ValueError("bit string must be one-dimensional")
    return arr


def bits_to_int(bits) -> int:
    """Bit ``i`` of the string becomes the coefficient of ``x**i``."""
    bits = as_bits(bits)
    if bits.size == 0:
        return 0
    return int.from_bytes(np.packbits(bits, bitorder="little").tobytes(), "little")


def int_to_bits(value: int, length: int) -> np.ndarray:
    if length == 0:
        return np.zeros(0, dtype=np.uint8)
    raw = np.frombuffer(value.to_bytes((length + 7) // 8, "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:length].copy()


def pack_le(bits) -> bytes:
    """Little-endian bit order within bytes (bit 0 -> LSB of byte 0)."""
    return np.packbits(as_bits(bits), bitorder="little").tobytes()


def unpack_le(data: bytes, length: int) -> np.ndarray:
    arr = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    if arr.size < length:
        raise DecodeError("bit field shorter than declared length")
    return arr[:length].copy()


def pack_be(bits) -> bytes:
    """Big-endian bit order within bytes (bit 0 -> MSB of byte 0), zero padded."""
    return np.packbits(as_bits(bits), bitorder="big").tobytes()


def unpack_be(data: bytes, length: int | None = None) -> np.ndarray:
    arr = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="big")
    return arr if length is None else arr[:length].copy()


def encode_varint(value: int) -> bytes:
    """Unsigned base-128 little-endian varint with continuation bit."""
    if value < 0:
        raise ValueError("varint must be non-negative")
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def decode_varint(data: bytes, pos: int = 0) -> tuple[int, int]:
    """Return ``(value, new_pos)``."""
    value = shift = 0
    while True:
        if pos >= len(data):
            raise DecodeError("truncated varint")
        byte = data[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return value, pos
        shift += 7
        if shift > 70:
            raise DecodeError("varint too long")
