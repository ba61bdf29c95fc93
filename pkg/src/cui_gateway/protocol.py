"""Binary framing for client/server traffic.

Frame layout::

    +----------------+---------+---------------------+
    | length (u32 BE)| type u8 | payload (length B)  |
    +----------------+---------+---------------------+

``length`` counts payload bytes only; the 5-byte header is not included.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from enum import IntEnum

from .errors import PAYLOAD_LIMIT, FrameError

HEADER = struct.Struct(">IB")
HEADER_SIZE = HEADER.size
MAX_PAYLOAD = 2**32 - 1
DEFAULT_FRAME_LIMIT = 16 * 1024 * 1024


class MessageType(IntEnum):
    SESSION_CONFIG = 0x01
    CONFIG_ACK = 0x02
    AUDIO_IN_CHUNK = 0x03
    AUDIO_IN_END = 0x04
    TRANSCRIPT = 0x05
    RESPONSE_TEXT = 0x06
    AUDIO_OUT_CHUNK = 0x07
    AUDIO_OUT_END = 0x08
    ERROR = 0x09
    RESET_HISTORY = 0x0A
    TEXT_IN = 0x0B

    @property
    def client_to_server(self) -> bool:
        return self in CLIENT_TO_SERVER


CLIENT_TO_SERVER = frozenset(
    {
        MessageType.SESSION_CONFIG,
        MessageType.AUDIO_IN_CHUNK,
        MessageType.AUDIO_IN_END,
        MessageType.RESET_HISTORY,
        MessageType.TEXT_IN,
    }
)
SERVER_TO_CLIENT = frozenset(MessageType) - CLIENT_TO_SERVER


@dataclass(frozen=True)
class Frame:
    msg_type: MessageType
    payload: bytes = b""

    def text(self) -> str:
        return self.payload.decode("utf-8")

    def json(self) -> dict:
        return json.loads(self.payload.decode("utf-8"))


def encode_frame(msg_type: MessageType | int, payload: bytes = b"") -> bytes:
    try:
        code = MessageType(msg_type)
    except ValueError:
        raise FrameError(f"unknown message type 0x{int(msg_type):02X}") from None
    if len(payload) > MAX_PAYLOAD:
        raise FrameError(f"payload of {len(payload)} bytes exceeds the 32-bit length field", PAYLOAD_LIMIT)
    return HEADER.pack(len(payload), code) + bytes(payload)


def encode_json(msg_type: MessageType, obj: dict) -> bytes:
    return encode_frame(msg_type, json.dumps(obj, ensure_ascii=False).encode("utf-8"))


class FrameDecoder:
    """Incremental decoder; feed it whatever the transport hands over.

    Any protocol error poisons the decoder: every later ``feed`` raises the
    same error again.
    """

    def __init__(self, limit: int = DEFAULT_FRAME_LIMIT):
        if limit <= 0:
            raise ValueError("frame limit must be positive")
        self.limit = limit
        self._buffer = bytearray()
        self._error: FrameError | None = None

    @property
    def buffered(self) -> int:
        return len(self._buffer)

    @property
    def poisoned(self) -> bool:
        return self._error is not None

    def feed(self, data: bytes) -> list[Frame]:
        if self._error is not None:
            raise self._error
        buf = self._buffer
        buf += data
        frames: list[Frame] = []
        pos = 0
        try:
            while len(buf) - pos >= HEADER_SIZE:
                length, code = HEADER.unpack_from(buf, pos)
                try:
                    msg_type = MessageType(code)
                except ValueError:
                    raise FrameError(f"unknown message type 0x{code:02X}") from None
                if length > self.limit:
                    raise FrameError(
                        f"declared payload of {length} bytes exceeds limit {self.limit}", PAYLOAD_LIMIT
                    )
                end = pos + HEADER_SIZE + length
                if len(buf) < end:
                    break
                frames.append(Frame(msg_type, bytes(buf[pos + HEADER_SIZE : end])))
                pos = end
        except FrameError as exc:
            self._error = exc
            buf.clear()
            raise
        del buf[:pos]
        return frames


def decoder_feed(state: FrameDecoder, data: bytes) -> list[Frame]:
    return state.feed(data)
