"""Mono sample buffers and the PCM WAV contract.

WAV files are 16-bit signed little-endian PCM, mono, 48,000 Hz; float
samples are clipped to [-1, 1] and scaled by 32767 on write, so the
mapping is bit-exact for golden vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile


@dataclass
class SampleBuffer:
    samples: np.ndarray
    sample_rate: int = 48000

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("SampleBuffer is mono: samples must be 1-D")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def write_wav(path: str | Path, buf: SampleBuffer) -> None:
    clipped = np.clip(buf.samples, -1.0, 1.0)
    pcm = np.round(clipped * 32767.0).astype(np.int16)
    wavfile.write(str(path), buf.sample_rate, pcm)


def read_wav(path: str | Path) -> SampleBuffer:
    rate, data = wavfile.read(str(path))
    if data.ndim > 1:
        data = data.mean(axis=1)
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32767.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483647.0
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 127.0
    else:
        samples = data.astype(np.float64)
    return SampleBuffer(samples=samples, sample_rate=int(rate))
