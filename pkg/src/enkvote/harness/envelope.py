"""Wire framing: 1-octet type, 4-octet big-endian length, body."""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass

from ..errors import ProtocolError

_HEADER = struct.Struct("!BI")
HEADER_BYTES = _HEADER.size
MAX_BODY = 1 << 24


class MsgType(enum.IntEnum):
    SUBMIT = 0x01
    RELAY_AC = 0x02
    RELAY_CA = 0x03
    RELAY_AV = 0x04
    RELAY_VA = 0x05
    RELAY_AC_FINAL = 0x06
    ANNOUNCE = 0x10
    BOARD_EXPORT = 0x11


@dataclass(frozen=True)
class Envelope:
    msg_type: MsgType
    body: bytes

    def to_bytes(self):
        return _HEADER.pack(int(self.msg_type), len(self.body)) + self.body

    def digest(self):
        return hashlib.sha256(self.to_bytes()).hexdigest()

    @classmethod
    def from_bytes(cls, data):
        env, used = decode_prefix(data)
        if env is None or used != len(data):
            raise ProtocolError("envelope length does not match the data")
        return env


def _msg_type(value):
    try:
        return MsgType(value)
    except ValueError:
        raise ProtocolError(f"unknown message type 0x{value:02x}") from None


def decode_prefix(data):
    """Decode one envelope from the front of ``data``.

    Returns ``(envelope, octets consumed)`` or ``(None, 0)`` if more data is
    needed. The type octet is checked as soon as it arrives.
    """
    if len(data) < HEADER_BYTES:
        if data:
            _msg_type(data[0])
        return None, 0
    raw_type, length = _HEADER.unpack_from(data)
    msg_type = _msg_type(raw_type)
    if length > MAX_BODY:
        raise ProtocolError(f"declared body of {length} octets is too large")
    end = HEADER_BYTES + length
    if len(data) < end:
        return None, 0
    return Envelope(msg_type, bytes(data[HEADER_BYTES:end])), end


def read_envelope(stream):
    """Read exactly one envelope from a binary file-like object; None on clean EOF."""
    header = stream.read(HEADER_BYTES)
    if not header:
        return None
    if len(header) < HEADER_BYTES:
        raise ProtocolError("connection closed inside a header")
    raw_type, length = _HEADER.unpack(header)
    msg_type = _msg_type(raw_type)
    if length > MAX_BODY:
        raise ProtocolError(f"declared body of {length} octets is too large")
    body = stream.read(length)
    if len(body) < length:
        raise ProtocolError("connection closed inside a body")
    return Envelope(msg_type, body)
