"""Optional error-correction layer.

Restores 138-bit packets with one or two bit errors by searching for flip
sets that make the frame CRC validate again, preferring the least-reliable
bit positions first.  Because the CRC is linear, a candidate flip set is
valid exactly when the XOR of its per-bit syndrome effects equals the
observed syndrome, so the search never recomputes a CRC.  If several
distinct candidates validate at the minimal flip count the packet is
ambiguous and we refuse to guess.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .guwal import crc16
from .guwmanet import PACKET_BITS, NetPacket, decode_net

NET_HEADER_BITS = 10
DATA_BITS = 112  # 14 CRC-covered frame bytes
CRC_BITS = 16


class Unrecoverable(Exception):
    """The packet cannot be uniquely restored; discard it or wait for
    another copy to merge."""


@dataclass
class SoftPacket:
    bits: np.ndarray  # 138 hard-decision bits
    reliability: np.ndarray  # per-bit confidence in [0, 1]
    rx_time: float = 0.0
    offset: int = 0

    def __post_init__(self) -> None:
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        self.reliability = np.asarray(self.reliability, dtype=np.float64)
        if self.bits.shape != (PACKET_BITS,):
            raise ValueError(f"expected {PACKET_BITS} bits, got {self.bits.shape}")
        if self.reliability.shape != (PACKET_BITS,):
            raise ValueError("reliability must match bit count")


def _frame_bytes(bits: np.ndarray) -> bytes:
    return np.packbits(bits[NET_HEADER_BITS:].astype(np.uint8)).tobytes()


def packet_crc_ok(bits: np.ndarray) -> bool:
    raw = _frame_bytes(np.asarray(bits, dtype=np.uint8))
    return crc16(raw[:14]) == int.from_bytes(raw[14:16], "big")


def _syndrome(bits: np.ndarray) -> int:
    raw = _frame_bytes(bits)
    return crc16(raw[:14]) ^ int.from_bytes(raw[14:16], "big")


def _bit_effects() -> np.ndarray:
    """Per-position effect of a bit flip on the CRC syndrome.

    Net-header flips never touch the CRC equation (effect 0, so they can
    never repair a failed checksum); flips in the 14 covered bytes change
    the computed CRC linearly; flips in the stored CRC change the stored
    value directly.
    """
    effects = np.zeros(PACKET_BITS, dtype=np.uint16)
    base = crc16(bytes(14))
    for i in range(DATA_BITS):
        msg = bytearray(14)
        msg[i // 8] = 0x80 >> (i % 8)
        effects[NET_HEADER_BITS + i] = crc16(bytes(msg)) ^ base
    for i in range(CRC_BITS):
        effects[NET_HEADER_BITS + DATA_BITS + i] = 1 << (CRC_BITS - 1 - i)
    return effects


_EFFECTS = _bit_effects()


def correct(pkt: SoftPacket) -> NetPacket:
    """Return the packet, repaired if needed; raises Unrecoverable when no
    unique 1- or 2-bit repair exists."""
    bits = pkt.bits.copy()
    syndrome = _syndrome(bits)
    if syndrome == 0:
        return decode_net(bits)

    singles = np.nonzero(_EFFECTS == syndrome)[0]
    if len(singles) == 1:
        bits[singles[0]] ^= 1
        return decode_net(bits)
    if len(singles) > 1:
        raise Unrecoverable(f"{len(singles)} single-bit candidates validate")

    pairs = _kernels.xor_pair_scan(_EFFECTS, syndrome)
    if len(pairs) == 1:
        bits[pairs[0, 0]] ^= 1
        bits[pairs[0, 1]] ^= 1
        return decode_net(bits)
    if len(pairs) > 1:
        # candidates are examined least-reliable-first, but a non-unique
        # candidate set at the minimal flip count means guessing; a 16-bit
        # checksum over ~9.5k candidates collides too often to risk it
        raise Unrecoverable(f"{len(pairs)} two-bit candidates validate")
    raise Unrecoverable("no 1- or 2-bit repair validates the checksum")


def merge(copies: list[SoftPacket]) -> NetPacket:
    """Reliability-weighted per-bit majority vote over several corrupted
    copies, then correct() on the merged packet."""
    if len(copies) < 2:
        raise ValueError("merge needs at least two copies")
    votes = np.zeros(PACKET_BITS)
    total = np.zeros(PACKET_BITS)
    for c in copies:
        signed = c.bits.astype(np.float64) * 2.0 - 1.0
        votes += signed * c.reliability
        total += c.reliability
    merged_bits = (votes > 0).astype(np.uint8)
    merged_rel = np.abs(votes) / np.maximum(total, 1e-12)
    merged = SoftPacket(
        bits=merged_bits,
        reliability=np.clip(merged_rel, 0.0, 1.0),
        rx_time=min(c.rx_time for c in copies),
    )
    return correct(merged)
