"""GUWAL application-layer frames.

A frame is exactly 16 bytes: 2-byte header, 1 payload-type byte, 11 payload
bytes and a CRC-16 trailer.  Header bit layout (big-endian within the
16-bit word, normative -- see docs/PROTOCOL.md):

    bits 15-14  frame type (0 = data, 1 = ack, 2-3 reserved)
    bit  13     priority flag
    bit  12     ack-requested flag
    bits 11-6   source operational address (0-63)
    bits  5-0   destination operational address (0-63)

The CRC is CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection,
no output xor) over bytes 0..13, stored big-endian in bytes 14..15.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

FRAME_LEN = 16
HEADER_LEN = 2
PAYLOAD_LEN = 11
CRC_LEN = 2

PAYLOAD_TYPE_TEXT = 0

# Fill bytes used to vary the CRC of deliberate re-sends of identical text.
# The padding after a text payload is one NUL terminator followed by the
# rotating pad value, so display extraction (truncate at first NUL) is
# unaffected by the rotation.
PAD_ROTATION = 8


class FrameType(IntEnum):
    DATA = 0
    ACK = 1
    RESERVED2 = 2
    RESERVED3 = 3


class GuwalError(Exception):
    """Base class for framing errors."""


class PayloadTooLong(GuwalError):
    pass


class LengthError(GuwalError):
    pass


class ChecksumError(GuwalError):
    """Stored CRC does not match the recomputed one; the EC layer may try
    to restore the packet."""


_CRC_TABLE: list[int] = []
for _byte in range(256):
    _crc = _byte << 8
    for _ in range(8):
        _crc = ((_crc << 1) ^ 0x1021) & 0xFFFF if _crc & 0x8000 else (_crc << 1) & 0xFFFF
    _CRC_TABLE.append(_crc)


def crc16(data: bytes | bytearray) -> int:
    """CRC-16/CCITT-FALSE of ``data`` (check value: crc16(b"123456789") == 0x29B1)."""
    crc = 0xFFFF
    for b in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC_TABLE[(crc >> 8) ^ b]
    return crc


@dataclass(frozen=True)
class GuwalHeader:
    frame_type: FrameType = FrameType.DATA
    priority: bool = False
    ack_requested: bool = False
    src: int = 0
    dst: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.src <= 63:
            raise ValueError(f"src address out of range: {self.src}")
        if not 0 <= self.dst <= 63:
            raise ValueError(f"dst address out of range: {self.dst}")

    def pack(self) -> bytes:
        word = (
            (int(self.frame_type) << 14)
            | (int(self.priority) << 13)
            | (int(self.ack_requested) << 12)
            | (self.src << 6)
            | self.dst
        )
        return word.to_bytes(2, "big")

    @classmethod
    def unpack(cls, raw: bytes) -> "GuwalHeader":
        if len(raw) != 2:
            raise LengthError(f"header must be 2 bytes, got {len(raw)}")
        word = int.from_bytes(raw, "big")
        return cls(
            frame_type=FrameType((word >> 14) & 0x3),
            priority=bool((word >> 13) & 0x1),
            ack_requested=bool((word >> 12) & 0x1),
            src=(word >> 6) & 0x3F,
            dst=word & 0x3F,
        )


@dataclass(frozen=True)
class GuwalFrame:
    header: GuwalHeader
    payload_type: int
    payload: bytes  # exactly 11 bytes, already padded
    crc: int

    def __post_init__(self) -> None:
        if len(self.payload) != PAYLOAD_LEN:
            raise ValueError("payload must be exactly 11 bytes (pre-padded)")

    @property
    def text(self) -> str:
        """Payload interpreted as UTF-8 text, truncated at the first NUL."""
        body = self.payload.split(b"\x00", 1)[0]
        return body.decode("utf-8", errors="replace")

    def to_bytes(self) -> bytes:
        return encode_frame(self.header, self.payload_type, self.payload)


def encode_frame(header: GuwalHeader, payload_type: int, payload: bytes, *, pad: int = 0) -> bytes:
    """Serialize to the 16-byte wire image, zero/pad-filling the payload.

    ``pad`` selects the rotating fill byte written after the NUL terminator
    so a re-sent identical payload gets a fresh CRC (and therefore a fresh
    dedup key at the network layer).
    """
    if len(payload) > PAYLOAD_LEN:
        raise PayloadTooLong(f"payload is {len(payload)} bytes, max {PAYLOAD_LEN}")
    if not 0 <= payload_type <= 0xFF:
        raise ValueError("payload_type must fit one byte")
    padded = bytearray(payload)
    if len(padded) < PAYLOAD_LEN:
        padded.append(0)
    while len(padded) < PAYLOAD_LEN:
        padded.append(pad % PAD_ROTATION)
    body = header.pack() + bytes([payload_type]) + bytes(padded)
    return body + crc16(body).to_bytes(2, "big")


def decode_frame(raw: bytes) -> GuwalFrame:
    """Parse a 16-byte image; raises ChecksumError/LengthError on bad input."""
    if len(raw) != FRAME_LEN:
        raise LengthError(f"frame must be {FRAME_LEN} bytes, got {len(raw)}")
    stored = int.from_bytes(raw[14:16], "big")
    computed = crc16(raw[:14])
    if stored != computed:
        raise ChecksumError(f"crc mismatch: stored={stored:#06x} computed={computed:#06x}")
    return GuwalFrame(
        header=GuwalHeader.unpack(raw[0:2]),
        payload_type=raw[2],
        payload=raw[3:14],
        crc=stored,
    )


def chunk_message(
    text: str,
    *,
    src: int = 0,
    dst: int = 0,
    priority: bool = False,
    ack_requested: bool = True,
    pad: int = 0,
) -> list[GuwalFrame]:
    """Split UTF-8 text into data frames of at most 11 payload bytes each.

    Splits never tear a multi-byte character; concatenating the decoded
    payloads reproduces ``text``.  ``pad`` only affects the final chunk's
    padding bytes.
    """
    data = text.encode("utf-8")
    chunks: list[bytes] = []
    pos = 0
    while pos < len(data):
        end = min(pos + PAYLOAD_LEN, len(data))
        # back off to a UTF-8 boundary: continuation bytes are 0b10xxxxxx
        while end < len(data) and (data[end] & 0xC0) == 0x80:
            end -= 1
        chunks.append(data[pos:end])
        pos = end
    if not chunks:
        chunks = [b""]
    header = GuwalHeader(
        frame_type=FrameType.DATA,
        priority=priority,
        ack_requested=ack_requested,
        src=src,
        dst=dst,
    )
    frames = []
    for i, chunk in enumerate(chunks):
        chunk_pad = pad if i == len(chunks) - 1 else 0
        raw = encode_frame(header, PAYLOAD_TYPE_TEXT, chunk, pad=chunk_pad)
        frames.append(decode_frame(raw))
    return frames


def make_ack(acked: GuwalFrame) -> GuwalFrame:
    """Ack frame for ``acked``: src/dst swapped, payload bytes 0..1 carry the
    acknowledged frame's CRC as the correlation token."""
    header = GuwalHeader(
        frame_type=FrameType.ACK,
        priority=acked.header.priority,
        ack_requested=False,
        src=acked.header.dst,
        dst=acked.header.src,
    )
    token = acked.crc.to_bytes(2, "big")
    raw = encode_frame(header, PAYLOAD_TYPE_TEXT, token)
    return decode_frame(raw)


def ack_token(ack: GuwalFrame) -> int:
    """Correlation token (the acknowledged frame's CRC) carried by an ack."""
    return int.from_bytes(ack.payload[0:2], "big")
