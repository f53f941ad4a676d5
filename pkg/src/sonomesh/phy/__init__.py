"""Physical layer: FHSS modem, channel code and receive filtering."""

from .config import (
    CODED_BITS,
    PACKET_BITS,
    PACKET_SAMPLES,
    PREAMBLE_LEN,
    PROFILES,
    HopSequence,
    ModemConfig,
    get_profile,
    hop_sequence,
    window,
    window_at,
)
from .convcode import conv_decode, conv_decode_hard, conv_encode
from .filters import bandpass, bandpass_taps, group_delay_samples
from .modem import (
    NoPreambleError,
    demodulate,
    detect_preamble,
    make_preamble,
    modulate_bit,
    modulate_packet,
)

__all__ = [
    "CODED_BITS",
    "PACKET_BITS",
    "PACKET_SAMPLES",
    "PREAMBLE_LEN",
    "PROFILES",
    "HopSequence",
    "ModemConfig",
    "NoPreambleError",
    "bandpass",
    "bandpass_taps",
    "conv_decode",
    "conv_decode_hard",
    "conv_encode",
    "demodulate",
    "detect_preamble",
    "get_profile",
    "group_delay_samples",
    "hop_sequence",
    "make_preamble",
    "modulate_bit",
    "modulate_packet",
    "window",
    "window_at",
]
