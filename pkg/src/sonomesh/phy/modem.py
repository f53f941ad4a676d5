"""Frequency-hopping modem: per-bit tone synthesis, preamble handling and
soft-decision demodulation.

Each coded bit j becomes 1024 samples of the tone the hop sequence assigns
to (j, bit), shaped by the bit window; a packet is the 42 ms preamble
followed by 276 such blocks (284,640 samples, 5.93 s at 48 kHz).  The
receiver band-limits, synchronizes on the preamble by normalized
cross-correlation, measures both candidate tones of every block with a
single-bin DFT and Viterbi-decodes the soft symbols.
"""

from __future__ import annotations

import numpy as np
from scipy import signal

from ..audio import SampleBuffer
from ..ec import SoftPacket
from .config import (
    CODED_BITS,
    PACKET_BITS,
    PACKET_SAMPLES,
    PREAMBLE_CHIP_LEN,
    PREAMBLE_CHIPS,
    PREAMBLE_LEN,
    PREAMBLE_SEED,
    ModemConfig,
    hop_sequence,
    window,
)
from .convcode import conv_decode, conv_encode
from .filters import bandpass


class NoPreambleError(Exception):
    """No synchronization preamble was found above the detection threshold."""


def modulate_bit(j: int, b: int, cfg: ModemConfig) -> np.ndarray:
    """Samples for coded bit ``b`` at position ``j`` (real projection of the
    complex carrier, peak amplitude = cfg.gain at the window maximum)."""
    hop = hop_sequence(cfg)
    n = cfg.samples_per_bit
    k = np.arange(n)
    tone = np.cos(2.0 * np.pi * hop.bins(j, b) * k / n)
    return cfg.gain * tone * window(n)


def make_preamble(cfg: ModemConfig) -> SampleBuffer:
    """42 ms synchronization burst: 21 Hann-windowed chips hopping over the
    profile's carrier bins under a dedicated seed."""
    rng = np.random.default_rng(PREAMBLE_SEED)
    bins = rng.choice(cfg.carrier_bins, size=PREAMBLE_CHIPS)
    t = np.arange(PREAMBLE_CHIP_LEN)
    hann = 0.5 - 0.5 * np.cos(2.0 * np.pi * t / (PREAMBLE_CHIP_LEN - 1))
    chips = [
        cfg.gain * np.cos(2.0 * np.pi * (b * cfg.bin_hz) * t / cfg.sample_rate) * hann
        for b in bins
    ]
    return SampleBuffer(np.concatenate(chips), cfg.sample_rate)


def detect_preamble(rx: SampleBuffer, cfg: ModemConfig, *, start: int = 0) -> int:
    """Sample offset of the best preamble match at or after ``start``.

    Raises NoPreambleError when the peak normalized correlation stays below
    cfg.preamble_threshold.
    """
    pre = make_preamble(cfg).samples
    x = rx.samples[start:]
    if len(x) < len(pre):
        raise NoPreambleError("buffer shorter than the preamble")
    corr = signal.fftconvolve(x, pre[::-1], mode="valid")
    win_energy = np.convolve(x * x, np.ones(len(pre)), mode="valid")
    norm = np.linalg.norm(pre) * np.sqrt(np.maximum(win_energy, 0.0)) + 1e-12
    ncc = np.abs(corr) / norm
    peak = int(np.argmax(ncc))
    if ncc[peak] < cfg.preamble_threshold:
        raise NoPreambleError(
            f"peak correlation {ncc[peak]:.3f} below threshold {cfg.preamble_threshold}"
        )
    return start + peak


def modulate_packet(bits: np.ndarray, cfg: ModemConfig) -> SampleBuffer:
    """Preamble plus one windowed tone block per coded bit."""
    bits = np.asarray(bits, dtype=np.uint8)
    if len(bits) != PACKET_BITS:
        raise ValueError(f"packet must be {PACKET_BITS} bits, got {len(bits)}")
    coded = conv_encode(bits)
    hop = hop_sequence(cfg)
    n = cfg.samples_per_bit
    k = np.arange(n)
    bins = np.where(coded == 1, hop.hi[: len(coded)], hop.lo[: len(coded)])
    phases = 2.0 * np.pi * np.outer(bins, k) / n
    blocks = cfg.gain * np.cos(phases) * window(n)
    samples = np.concatenate([make_preamble(cfg).samples, blocks.ravel()])
    assert len(samples) == PACKET_SAMPLES
    return SampleBuffer(samples, cfg.sample_rate)


def _block_magnitudes(payload: np.ndarray, cfg: ModemConfig) -> tuple[np.ndarray, np.ndarray]:
    """Single-bin DFT magnitudes of both candidate tones for every block."""
    hop = hop_sequence(cfg)
    n = cfg.samples_per_bit
    k = np.arange(n)
    blocks = payload.reshape(CODED_BITS, n) * window(n)
    ph_lo = np.exp(-2.0j * np.pi * np.outer(hop.lo[:CODED_BITS], k) / n)
    ph_hi = np.exp(-2.0j * np.pi * np.outer(hop.hi[:CODED_BITS], k) / n)
    m_lo = np.abs(np.einsum("jk,jk->j", blocks, ph_lo))
    m_hi = np.abs(np.einsum("jk,jk->j", blocks, ph_hi))
    return m_lo, m_hi


def demodulate(rx: SampleBuffer, cfg: ModemConfig, *, start: int = 0) -> SoftPacket:
    """Full receive chain: bandpass, preamble sync, per-bit tone correlation,
    Viterbi decode.  Returns a SoftPacket of 138 bits plus reliabilities."""
    filtered = bandpass(rx, cfg)
    offset = detect_preamble(filtered, cfg, start=start)
    payload_start = offset + PREAMBLE_LEN
    payload_end = payload_start + CODED_BITS * cfg.samples_per_bit
    if payload_end > len(filtered.samples):
        raise NoPreambleError("packet truncated after preamble")
    payload = filtered.samples[payload_start:payload_end]
    m_lo, m_hi = _block_magnitudes(payload, cfg)
    soft = (m_hi - m_lo) / (m_hi + m_lo + 1e-12)
    bits, reliability = conv_decode(soft)
    return SoftPacket(
        bits=bits,
        reliability=reliability,
        rx_time=offset / cfg.sample_rate,
        offset=offset,
    )
