"""Length-prefixed message frames shared by the TCP transport and the simulator.

Header (16 bytes, little-endian)::

    magic "VP" | version:u8 | msg_type:u8 | request_id:u64 | payload_len:u32

A request payload is the opaque input blob; a response payload is a codec
message; an error payload is UTF-8 text.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

from ..exceptions import CorruptPayloadError, ProtocolError
from ..predictors import LabeledSample

MAGIC = b"VP"
VERSION = 1
_HEADER = struct.Struct("<2sBBQI")
HEADER_SIZE = _HEADER.size
MAX_PAYLOAD = 16 * 1024 * 1024

_SAMPLE = struct.Struct("<QI")


class MsgType(IntEnum):
    REQUEST = 0
    RESPONSE = 1
    ERROR = 2


@dataclass(frozen=True)
class Frame:
    msg_type: MsgType
    request_id: int
    payload: bytes = b""


def encode_frame(frame: Frame) -> bytes:
    if len(frame.payload) > MAX_PAYLOAD:
        raise ProtocolError(f"payload of {len(frame.payload)} bytes exceeds limit")
    return _HEADER.pack(MAGIC, VERSION, int(frame.msg_type), frame.request_id, len(frame.payload)) + bytes(frame.payload)


def parse_header(header: bytes) -> tuple[MsgType, int, int]:
    """Validate a 16-byte header; returns ``(msg_type, request_id, payload_len)``."""
    if len(header) < HEADER_SIZE:
        raise CorruptPayloadError("truncated frame header")
    magic, version, msg_type, request_id, payload_len = _HEADER.unpack_from(header)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ProtocolError(f"unsupported version {version}")
    try:
        kind = MsgType(msg_type)
    except ValueError:
        raise ProtocolError(f"unknown message type {msg_type}") from None
    if payload_len > MAX_PAYLOAD:
        raise ProtocolError(f"declared payload of {payload_len} bytes exceeds limit")
    return kind, request_id, payload_len


def decode_frame(data: bytes) -> Frame:
    kind, request_id, payload_len = parse_header(data)
    payload = data[HEADER_SIZE:]
    if len(payload) != payload_len:
        raise CorruptPayloadError(f"frame declares {payload_len} payload bytes, got {len(payload)}")
    return Frame(kind, request_id, bytes(payload))


def error_frame(request_id: int, message: str) -> bytes:
    return encode_frame(Frame(MsgType.ERROR, request_id, message.encode("utf-8")[:1024]))


def encode_sample(sample: LabeledSample) -> bytes:
    """Input blob used by the built-in predictors: ``sample_id:u64 | true_class:u32``.

    The label only drives the synthetic predictor's calibration; fixture
    predictors ignore it.
    """
    return _SAMPLE.pack(sample.sample_id, sample.true_class)


def decode_sample(blob: bytes) -> LabeledSample:
    if len(blob) != _SAMPLE.size:
        raise CorruptPayloadError(f"input blob must be {_SAMPLE.size} bytes, got {len(blob)}")
    sample_id, true_class = _SAMPLE.unpack(blob)
    return LabeledSample(sample_id, true_class)
