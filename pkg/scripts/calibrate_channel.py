#!/usr/bin/env python3
"""Calibrate the default channel model.

Step 1 measures the modem's decode SNR threshold by Monte-Carlo: packets
are modulated, hit with white noise at a given in-band SNR and demodulated;
the threshold is the lowest SNR (0.5 dB grid) with >= 99% packet success.

Step 2 solves the two-point range constraints for the attenuation model

    attn(d, f) = ref_loss + 10 * n * log10(d) + slope * max(f - knee, 0) * d

using the observed cliffs: 8.2-8.3 m at 21 kHz and 19.7-19.9 m at
18.6 kHz (cliff midpoints 8.25 m and 19.85 m).  With the knee pinned at
18.6 kHz (the hardware response is flat below it, rolling off above), the
18.6 kHz equation fixes ref_loss and the 21 kHz equation fixes the slope.

Run with --write to patch the defaults into sonomesh/channel/model.py.
"""

from __future__ import annotations

import argparse
import math
import re
import sys
from pathlib import Path

import numpy as np

from sonomesh.audio import SampleBuffer
from sonomesh.ec import Unrecoverable, correct
from sonomesh.guwal import chunk_message
from sonomesh.guwmanet import NetHeader, NetPacket, encode_net
from sonomesh.phy import NoPreambleError, demodulate, get_profile, modulate_packet

CLIFF_21K_M = 8.25
CLIFF_18K6_M = 19.85
TX_LEVEL_DB = 94.0
NOISE_FLOOR_DB = 40.0
SPREADING_EXP = 2.0
KNEE_HZ = 18600.0


def packet_success(cfg, snr_db: float, trials: int, rng: np.random.Generator) -> float:
    band = cfg.passband[1] - cfg.passband[0]
    ok = 0
    for i in range(trials):
        frame = chunk_message(f"cal {i}", src=1, dst=2, ack_requested=False)[0]
        pkt = NetPacket(NetHeader(1, 1), frame)
        tx = modulate_packet(encode_net(pkt), cfg)
        sig_rms = math.sqrt(float(np.mean(tx.samples**2)))
        white = sig_rms / 10 ** (snr_db / 20) * math.sqrt(cfg.sample_rate / 2 / band)
        noise = rng.normal(0.0, white, len(tx.samples) + 6000)
        rx = noise.copy()
        rx[3000 : 3000 + len(tx.samples)] += tx.samples
        try:
            out = correct(demodulate(SampleBuffer(rx, cfg.sample_rate), cfg))
        except (NoPreambleError, Unrecoverable):
            continue
        if out == pkt:
            ok += 1
    return ok / trials


def measure_decode_snr(trials: int, seed: int) -> float:
    cfg = get_profile("ultrasonic-21k")
    rng = np.random.default_rng(seed)
    snr = 4.0
    last_good = None
    while snr >= -16.0:
        rate = packet_success(cfg, snr, trials, rng)
        print(f"  snr={snr:+.1f} dB -> {rate:.1%}")
        if rate >= 0.99:
            last_good = snr
        elif last_good is not None:
            break
        snr -= 0.5
    if last_good is None:
        sys.exit("no SNR met the 99% target; modem is broken")
    return last_good


def solve_model(decode_snr_db: float) -> dict:
    cfg21 = get_profile("ultrasonic-21k")
    cfg18 = get_profile("near-ultrasonic-18k6")
    # budget at the cliff sits exactly at threshold: TX - attn - NF = SNR_th
    margin = TX_LEVEL_DB - NOISE_FLOOR_DB - decode_snr_db
    # 18.6 kHz carries no above-knee absorption, fixing ref_loss alone
    ref_loss = margin - 10 * SPREADING_EXP * math.log10(CLIFF_18K6_M)
    a21 = (margin - ref_loss - 10 * SPREADING_EXP * math.log10(CLIFF_21K_M)) / CLIFF_21K_M
    slope = a21 / ((cfg21.center_freq - KNEE_HZ) / 1000.0)
    assert abs(cfg18.center_freq - KNEE_HZ) < 1e-9
    return {
        "decode_snr_db": decode_snr_db,
        "ref_loss_db": round(ref_loss, 6),
        "absorption_slope_db_per_m_khz": round(slope, 7),
    }


def write_defaults(values: dict) -> None:
    path = Path(__file__).resolve().parents[1] / "src" / "sonomesh" / "channel" / "model.py"
    text = path.read_text()
    text = re.sub(
        r"DEFAULT_DECODE_SNR_DB = .*",
        f"DEFAULT_DECODE_SNR_DB = {values['decode_snr_db']}",
        text,
    )
    text = re.sub(
        r"DEFAULT_ABSORPTION_SLOPE = [0-9.eE+-]+",
        f"DEFAULT_ABSORPTION_SLOPE = {values['absorption_slope_db_per_m_khz']}",
        text,
    )
    text = re.sub(
        r"DEFAULT_REF_LOSS_DB = [0-9.eE+-]+",
        f"DEFAULT_REF_LOSS_DB = {values['ref_loss_db']}",
        text,
    )
    path.write_text(text)
    print(f"patched {path}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=20240901)
    ap.add_argument("--write", action="store_true", help="patch defaults into model.py")
    args = ap.parse_args()

    print("measuring decode SNR threshold (>=99% packet success)...")
    decode_snr = measure_decode_snr(args.trials, args.seed)
    print(f"decode_snr_db = {decode_snr:+.1f}")
    values = solve_model(decode_snr)
    print("calibrated model:")
    for k, v in values.items():
        print(f"  {k} = {v}")
    from sonomesh.channel.model import ChannelModel

    m = ChannelModel(
        ref_loss_db=values["ref_loss_db"],
        absorption_slope_db_per_m_khz=values["absorption_slope_db_per_m_khz"],
        decode_snr_db=values["decode_snr_db"],
    )
    print(f"  check: 21 kHz max range {m.max_range(21000):.3f} m (target {CLIFF_21K_M})")
    print(f"  check: 18.6 kHz max range {m.max_range(18600):.3f} m (target {CLIFF_18K6_M})")
    if args.write:
        write_defaults(values)


if __name__ == "__main__":
    main()
