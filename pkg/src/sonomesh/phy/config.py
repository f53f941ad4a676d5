"""Modem configuration: carrier plan, hop sequence and the bit window.

Two built-in profiles:

* ``ultrasonic-21k``   -- 21 kHz center, passband 20.4-23.0 kHz
* ``near-ultrasonic-18k6`` -- 18.6 kHz center, passband 17.6-19.6 kHz

Both run at 48 kHz with 1024 samples per coded bit, so the FFT bin spacing
is 46.875 Hz and the 21 kHz center sits exactly on bin 448.  Each of the 20
carrier pairs maps a coded-bit value to one tone; the hop sequence walks
the pairs pseudo-randomly with no immediate repeat, so consecutive bits
never share a tone.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

SAMPLE_RATE = 48000
SAMPLES_PER_BIT = 1024
RAMP_LEN = 64  # trapezoid edge, 1.33 ms
PREAMBLE_CHIPS = 21
PREAMBLE_CHIP_LEN = 96
PREAMBLE_LEN = PREAMBLE_CHIPS * PREAMBLE_CHIP_LEN  # 2016 samples = 42 ms
PREAMBLE_SEED = 0x5EED
PACKET_BITS = 138
CODED_BITS = 2 * PACKET_BITS  # rate-1/2, truncated (no tail)
PACKET_SAMPLES = PREAMBLE_LEN + CODED_BITS * SAMPLES_PER_BIT  # 284,640


@dataclass(frozen=True)
class ModemConfig:
    name: str = "ultrasonic-21k"
    sample_rate: int = SAMPLE_RATE
    samples_per_bit: int = SAMPLES_PER_BIT
    center_freq: float = 21000.0
    passband: tuple[float, float] = (20400.0, 23000.0)
    num_pairs: int = 20
    # carrier bins: pair p = (lo_base + p, hi_base + p)
    carrier_lo_base: int = 436
    carrier_hi_base: int = 464
    hop_seed: int = 0xACDC
    gain: float = 0.8  # peak output amplitude
    preamble_threshold: float = 0.35
    bandpass_taps: int = 301

    @property
    def bin_hz(self) -> float:
        return self.sample_rate / self.samples_per_bit

    @property
    def carrier_bins(self) -> np.ndarray:
        lo = np.arange(self.carrier_lo_base, self.carrier_lo_base + self.num_pairs)
        hi = np.arange(self.carrier_hi_base, self.carrier_hi_base + self.num_pairs)
        return np.concatenate([lo, hi])

    def __post_init__(self) -> None:
        bins = self.carrier_bins
        f_lo, f_hi = bins.min() * self.bin_hz, bins.max() * self.bin_hz
        if not (self.passband[0] <= f_lo and f_hi <= self.passband[1]):
            raise ValueError(
                f"carrier bins {f_lo:.0f}-{f_hi:.0f} Hz fall outside passband {self.passband}"
            )
        if self.carrier_hi_base - self.carrier_lo_base < self.num_pairs:
            raise ValueError("tone pair halves overlap")


PROFILES: dict[str, ModemConfig] = {
    "ultrasonic-21k": ModemConfig(),
    "near-ultrasonic-18k6": ModemConfig(
        name="near-ultrasonic-18k6",
        center_freq=18600.0,
        passband=(17600.0, 19600.0),
        carrier_lo_base=377,
        carrier_hi_base=398,
    ),
}


def get_profile(name: str) -> ModemConfig:
    try:
        return PROFILES[name]
    except KeyError:
        raise KeyError(f"unknown profile {name!r}; available: {sorted(PROFILES)}") from None


class HopSequence:
    """Deterministic tone assignment for each coded-bit position.

    ``bins(j, b)`` gives the FFT bin of coded bit ``j`` with value ``b``.
    Consecutive positions always use different pairs, so their tone sets
    are disjoint.
    """

    def __init__(self, cfg: ModemConfig, length: int = CODED_BITS):
        rng = np.random.default_rng(cfg.hop_seed)
        seq = np.empty(length, dtype=np.int64)
        prev = -1
        for j in range(length):
            while True:
                c = int(rng.integers(0, cfg.num_pairs))
                if c != prev:
                    break
            seq[j] = c
            prev = c
        self.pair_index = seq
        self.lo = cfg.carrier_lo_base + seq
        self.hi = cfg.carrier_hi_base + seq

    def __len__(self) -> int:
        return len(self.pair_index)

    def bins(self, j: int, b: int) -> int:
        return int(self.hi[j] if b else self.lo[j])


@lru_cache(maxsize=8)
def hop_sequence(cfg: ModemConfig) -> HopSequence:
    return HopSequence(cfg)


@lru_cache(maxsize=4)
def window(n: int = SAMPLES_PER_BIT, ramp: int = RAMP_LEN) -> np.ndarray:
    """Per-bit window: square root of a Hamming window times a trapezoid
    that ramps linearly over the first and last ``ramp`` samples."""
    k = np.arange(n)
    hamming_root = np.sqrt(0.54 + 0.46 * np.cos(2.0 * np.pi * (k - n / 2) / n))
    trapezoid = np.minimum(np.minimum(k / ramp, (n - 1 - k) / ramp), 1.0)
    return hamming_root * trapezoid


def window_at(k: int, n: int = SAMPLES_PER_BIT) -> float:
    """Single window sample; raises IndexError outside [0, n)."""
    if not 0 <= k < n:
        raise IndexError(f"window index {k} outside [0, {n})")
    return float(window(n)[k])
