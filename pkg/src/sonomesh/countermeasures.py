"""Countermeasures: a 4-pole lowpass guard filter, an ultrasonic-modulation
detector and a pitch-down transform.

The guard filter emulates an analog-style 4-pole Butterworth (the kind an
audio plugin chain applies): a plain bilinear design at 48 kHz would
over-attenuate near Nyquist, so the cascaded second-order sections run at
an 8x oversampled rate, matching the analog magnitude 1/sqrt(1+(f/fc)^8)
to within 0.1 dB across the ultrasonic band.

The detector slides non-overlapping windows over the input and inspects
the 17-24 kHz band: a window is ``suspicious`` when the band holds more
than ``band_ratio`` of the energy, and ``covert`` when that energy sits in
discrete hopping tones (strong per-block peaks that move at the modem's
hop rate).  ``triggered`` requires a run of consecutive covert windows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .audio import SampleBuffer

OVERSAMPLE = 8


def lowpass4(audio: SampleBuffer, cutoff_hz: float) -> SampleBuffer:
    """4th-order Butterworth lowpass applied as cascaded second-order
    sections at an oversampled rate (analog magnitude response)."""
    if cutoff_hz <= 0 or cutoff_hz >= audio.sample_rate / 2:
        raise ValueError(f"cutoff must lie in (0, {audio.sample_rate / 2}) Hz")
    x = audio.samples
    if len(x) == 0:
        return SampleBuffer(x.copy(), audio.sample_rate)
    n = len(x)
    # exact bandlimited upsample: zero-pad the spectrum
    spec = np.fft.rfft(x)
    up_spec = np.zeros(n * OVERSAMPLE // 2 + 1, dtype=complex)
    up_spec[: len(spec)] = spec
    up = np.fft.irfft(up_spec, n * OVERSAMPLE) * OVERSAMPLE
    sos = signal.butter(4, cutoff_hz, fs=audio.sample_rate * OVERSAMPLE, output="sos")
    filtered = signal.sosfilt(sos, up)
    # no content above the original Nyquist remains, so plain decimation
    return SampleBuffer(filtered[::OVERSAMPLE], audio.sample_rate)


def butterworth4_attenuation_db(f_hz: float, cutoff_hz: float) -> float:
    """Analog 4-pole Butterworth magnitude, as insertion loss in dB."""
    return 10.0 * np.log10(1.0 + (f_hz / cutoff_hz) ** 8)


@dataclass
class DetectorParams:
    band: tuple[float, float] = (17000.0, 24000.0)
    window_samples: int = 4096  # ~85 ms at 48 kHz
    band_ratio: float = 0.25
    consecutive: int = 5  # covert windows required to trigger
    block: int = 1024  # modem bit block; hop structure is judged per block
    peak_ratio: float = 0.4  # per-block peak concentration for "discrete tone"
    silence_floor: float = 1e-7


@dataclass
class WindowVerdict:
    start: float
    end: float
    band_energy_ratio: float
    verdict: str  # clean | suspicious | covert


@dataclass
class DetectionReport:
    windows: list[WindowVerdict] = field(default_factory=list)
    triggered: bool = False

    def covert_fraction(self) -> float:
        if not self.windows:
            return 0.0
        return sum(1 for w in self.windows if w.verdict == "covert") / len(self.windows)

    def to_json(self) -> str:
        return json.dumps(
            {
                "triggered": self.triggered,
                "windows": [
                    {
                        "start": w.start,
                        "end": w.end,
                        "band_energy_ratio": round(w.band_energy_ratio, 4),
                        "verdict": w.verdict,
                    }
                    for w in self.windows
                ],
            },
            indent=2,
        )

    def to_log_lines(self) -> list[str]:
        lines = [
            f"t={w.start:.3f}..{w.end:.3f} ratio={w.band_energy_ratio:.3f} verdict={w.verdict}"
            for w in self.windows
        ]
        lines.append(f"triggered={'yes' if self.triggered else 'no'}")
        return lines


def _window_verdict(chunk: np.ndarray, fs: int, p: DetectorParams) -> tuple[float, str]:
    total = float(np.sum(chunk**2))
    if total < p.silence_floor:
        return 0.0, "clean"
    spec = np.abs(np.fft.rfft(chunk)) ** 2
    freqs = np.fft.rfftfreq(len(chunk), 1.0 / fs)
    in_band = (freqs >= p.band[0]) & (freqs <= p.band[1])
    ratio = float(spec[in_band].sum() / (spec.sum() + 1e-30))
    if ratio <= p.band_ratio:
        return ratio, "clean"
    # hop structure: per modem-block dominant tones, concentrated and moving
    nblocks = len(chunk) // p.block
    peaks = []
    concentrated = 0
    for i in range(nblocks):
        blk = chunk[i * p.block : (i + 1) * p.block]
        bs = np.abs(np.fft.rfft(blk)) ** 2
        bf = np.fft.rfftfreq(p.block, 1.0 / fs)
        bmask = (bf >= p.band[0]) & (bf <= p.band[1])
        band_energy = bs[bmask].sum()
        if band_energy <= 0:
            continue
        idx = np.argmax(bs * bmask)
        # tone concentration: peak bin and immediate neighbors hold the band
        lo, hi = max(idx - 1, 0), min(idx + 2, len(bs))
        if bs[lo:hi].sum() / band_energy >= p.peak_ratio:
            concentrated += 1
            peaks.append(idx)
    hopping = len(set(peaks)) >= 2
    if concentrated >= max(nblocks - 1, 1) and hopping:
        return ratio, "covert"
    return ratio, "suspicious"


def detect_covert(audio: SampleBuffer, params: DetectorParams | None = None) -> DetectionReport:
    p = params or DetectorParams()
    if audio.sample_rate < 44100:
        raise ValueError("detector needs at least 44.1 kHz input")
    report = DetectionReport()
    x = audio.samples
    n = p.window_samples
    run = 0
    for start in range(0, len(x) - n + 1, n):
        chunk = x[start : start + n]
        ratio, verdict = _window_verdict(chunk, audio.sample_rate, p)
        report.windows.append(
            WindowVerdict(
                start=start / audio.sample_rate,
                end=(start + n) / audio.sample_rate,
                band_energy_ratio=ratio,
                verdict=verdict,
            )
        )
        run = run + 1 if verdict == "covert" else 0
        if run >= p.consecutive:
            report.triggered = True
    return report


def pitch_down(audio: SampleBuffer, shift_hz: float, *, post_cutoff_hz: float = 5000.0) -> SampleBuffer:
    """Heterodyne the ultrasonic band into the audible range: multiply by a
    cosine at ``shift_hz`` and lowpass away the image band."""
    if shift_hz <= 0:
        raise ValueError("shift must be positive")
    x = audio.samples
    if len(x) == 0:
        return SampleBuffer(x.copy(), audio.sample_rate)
    t = np.arange(len(x)) / audio.sample_rate
    mixed = x * np.cos(2.0 * np.pi * shift_hz * t) * 2.0
    sos = signal.butter(6, post_cutoff_hz, fs=audio.sample_rate, output="sos")
    return SampleBuffer(signal.sosfilt(sos, mixed), audio.sample_rate)
