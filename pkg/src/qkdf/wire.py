"""Public-channel framing.

Layout: ``'Q' 'K' | version | msg_type | session_id (4, BE) | payload_len (4, BE)
| payload | key_offset (8, BE) | tag (8, BE)``.  The tag covers header and
payload.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

from .auth import AuthChannel, AuthTag
from .errors import AuthFailure, MalformedFrame

MAGIC = b"QK"
VERSION = 1
HEADER = struct.Struct(">2sBBII")
HEADER_LEN = HEADER.size
TRAILER_LEN = 16
MAX_PAYLOAD = 1 << 24


class MsgType(IntEnum):
    SIFT_PROPOSE = 1
    SIFT_RESPONSE = 2
    EC_SETS = 3
    EC_BISECT = 4
    EC_DONE = 5
    PA_PARAMS = 6
    KEY_CONFIRM = 7
    RELAY_KEY = 8
    TUNNEL_CTRL = 9
    TUNNEL_DATA = 10


@dataclass(frozen=True)
class PublicMessage:
    msg_type: MsgType
    session_id: int
    payload: bytes
    tag: AuthTag


def frame_message(msg_type: int, session_id: int, payload: bytes, auth: AuthChannel) -> bytes:
    if len(payload) >= MAX_PAYLOAD:
        raise ValueError(f"payload of {len(payload)} bytes exceeds the 2^24 limit")
    body = HEADER.pack(MAGIC, VERSION, int(msg_type), session_id, len(payload)) + payload
    return body + auth.tag(body).to_bytes()


def parse_header(data: bytes) -> tuple[MsgType, int, int]:
    if len(data) < HEADER_LEN + TRAILER_LEN:
        raise MalformedFrame("frame shorter than header and trailer")
    magic, version, mtype, session_id, plen = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MalformedFrame(f"bad magic {magic!r}")
    if version != VERSION:
        raise MalformedFrame(f"unsupported version {version}")
    try:
        mtype = MsgType(mtype)
    except ValueError:
        raise MalformedFrame(f"unknown msg_type {mtype}") from None
    if len(data) != HEADER_LEN + plen + TRAILER_LEN:
        raise MalformedFrame("payload_len disagrees with frame size")
    return mtype, session_id, plen


def parse_message(data: bytes, auth: AuthChannel | None) -> PublicMessage:
    """Decode and authenticate one frame; ``auth=None`` skips verification."""
    mtype, session_id, plen = parse_header(data)
    body = data[: HEADER_LEN + plen]
    tag = AuthTag.from_bytes(data[HEADER_LEN + plen :])
    if auth is not None and not auth.verify(body, tag):
        raise AuthFailure(f"{mtype.name} failed authentication")
    return PublicMessage(mtype, session_id, bytes(data[HEADER_LEN : HEADER_LEN + plen]), tag)
