"""Receive-side bandpass filtering.

The filter is a linear-phase FIR: an ideal bandpass for the profile's
passband shaped by a Blackman-Harris window.  It is applied with a
centered convolution, so the net group delay seen by the caller is zero
(the raw linear-phase delay is (ntaps - 1) / 2 samples).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import signal

from ..audio import SampleBuffer
from .config import ModemConfig


@lru_cache(maxsize=8)
def bandpass_taps(cfg: ModemConfig) -> np.ndarray:
    return signal.firwin(
        cfg.bandpass_taps,
        list(cfg.passband),
        pass_zero=False,
        window="blackmanharris",
        fs=cfg.sample_rate,
    )


def group_delay_samples(cfg: ModemConfig) -> int:
    """Raw linear-phase delay of the FIR; compensated by bandpass()."""
    return (cfg.bandpass_taps - 1) // 2


def bandpass(rx: SampleBuffer, cfg: ModemConfig) -> SampleBuffer:
    if rx.sample_rate != cfg.sample_rate:
        raise ValueError(f"expected {cfg.sample_rate} Hz input, got {rx.sample_rate}")
    taps = bandpass_taps(cfg)
    if len(rx.samples) == 0:
        return SampleBuffer(np.zeros(0), cfg.sample_rate)
    out = signal.fftconvolve(rx.samples, taps, mode="same")
    return SampleBuffer(out, cfg.sample_rate)
