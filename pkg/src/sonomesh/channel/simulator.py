"""Discrete-event simulation of the shared acoustic medium.

Nodes run the full protocol stack; the medium delivers each transmission
to every linked neighbor after the propagation delay.  A reception decodes
only if the link budget clears the decode SNR (blocking and any receiver
guard filter are budget penalties), no other arrival overlaps it
(collisions destroy both frames, no capture) and the receiver was not
transmitting (half-duplex).  Everything is driven by one time-ordered
queue, so a scenario plus its seed reproduces a byte-identical trace.
"""

from __future__ import annotations

import heapq
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..guwal import FrameType, GuwalFrame, chunk_message
from ..guwmanet import (
    Deliver,
    DeliveryFailed,
    Drop,
    Forward,
    LearnRoute,
    NetPacket,
    NodeState,
    Retransmit,
    RouteInvalidated,
    SendAck,
    encode_net,
)
from ..phy import PACKET_SAMPLES, get_profile, modulate_packet
from .model import ChannelModel, propagate
from .scenario import LinkSpec, Scenario

TICK_INTERVAL = 0.5


def guard_penalty_db(cutoff_hz: float, f_hz: float) -> float:
    """Insertion loss of a 4-pole Butterworth lowpass at ``f_hz``."""
    return 10.0 * np.log10(1.0 + (f_hz / cutoff_hz) ** 8)


@dataclass(frozen=True)
class TraceRecord:
    time: float
    node: str
    kind: str
    detail: dict

    def to_log_line(self) -> str:
        fields = " ".join(f"{k}={v}" for k, v in self.detail.items())
        return f"t={self.time:.3f} node={self.node} action={self.kind} {fields}".rstrip()


class EventTrace:
    def __init__(self) -> None:
        self.records: list[TraceRecord] = []

    def add(self, time: float, node: str, kind: str, **detail) -> None:
        self.records.append(TraceRecord(time, node, kind, detail))

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def filter(self, kind: str | None = None, node: str | None = None) -> list[TraceRecord]:
        out = self.records
        if kind is not None:
            out = [r for r in out if r.kind == kind]
        if node is not None:
            out = [r for r in out if r.node == node]
        return out

    def to_log_lines(self) -> list[str]:
        return [r.to_log_line() for r in self.records]

    def to_json(self) -> str:
        return json.dumps(
            [
                {"time": r.time, "node": r.node, "kind": r.kind, **r.detail}
                for r in self.records
            ],
            indent=2,
        )


@dataclass
class _Arrival:
    rx_id: str
    tx_id: str
    start: float
    end: float
    pkt: NetPacket
    link: LinkSpec
    distance: float
    tx_kind: str
    uid: int


@dataclass
class SimResult:
    scenario: Scenario
    trace: EventTrace
    originations: dict = field(default_factory=dict)  # key -> (time, node_id, frame)
    deliveries: list = field(default_factory=list)  # (time, node_id, key, latency)
    failures: list = field(default_factory=list)  # (time, node_id, key)
    retransmits: dict = field(default_factory=dict)  # key -> count

    def delivered_keys(self) -> set:
        return {key for (_, _, key, _) in self.deliveries}

    def all_data_delivered(self) -> bool:
        data_keys = set(self.originations)
        return data_keys <= self.delivered_keys()

    def latency_of(self, key) -> float | None:
        for (t, _, k, latency) in self.deliveries:
            if k == key:
                return latency
        return None


class Simulator:
    def __init__(self, scenario: Scenario, sinks: dict | None = None, wav_dump=None):
        scenario.validate()
        self.scenario = scenario
        self.cfg = get_profile(scenario.profile)
        self.model: ChannelModel = scenario.channel
        self.airtime = PACKET_SAMPLES / self.cfg.sample_rate
        self.trace = EventTrace()
        self.result = SimResult(scenario, self.trace)
        self.sinks = sinks or {}
        self.wav_dump = wav_dump  # callable(link, pkt, time) or None
        self._queue: list = []
        self._seq = itertools.count()
        self._uid = itertools.count()
        self._arrivals: dict[str, list[_Arrival]] = {n.id: [] for n in scenario.nodes}
        self._tx_intervals: dict[str, list[tuple[float, float]]] = {
            n.id: [] for n in scenario.nodes
        }
        self._busy_until: dict[str, float] = {n.id: 0.0 for n in scenario.nodes}
        self._pad_counter: dict[int, int] = {}
        root = np.random.default_rng(scenario.rng_seed)
        self.nodes: dict[str, NodeState] = {}
        self._guwal_to_ids: dict[int, list[str]] = {}
        for i, spec in enumerate(scenario.nodes):
            node_rng = np.random.default_rng([scenario.rng_seed, i])
            self.nodes[spec.id] = NodeState(
                net_addr=spec.net_addr,
                guwal_addr=spec.guwal_addr,
                rng=node_rng,
                config=scenario.routing,
            )
            self._guwal_to_ids.setdefault(spec.guwal_addr, []).append(spec.id)
        self._rx_penalty: dict[str, float] = {}
        for spec in scenario.nodes:
            if spec.rx_filter_cutoff_hz:
                self._rx_penalty[spec.id] = guard_penalty_db(
                    spec.rx_filter_cutoff_hz, self.cfg.center_freq
                )
            else:
                self._rx_penalty[spec.id] = 0.0
        self._prop_rng = root

    # -- event plumbing ------------------------------------------------------

    def _push(self, time: float, kind: str, payload) -> None:
        heapq.heappush(self._queue, (time, next(self._seq), kind, payload))

    def run(self) -> SimResult:
        s = self.scenario
        horizon = s.duration
        if horizon is None:
            last_traffic = max((t.time for t in s.traffic), default=0.0)
            horizon = last_traffic + 240.0
        for t in s.traffic:
            self._push(t.time, "traffic", t)
        for node_id in self.nodes:
            tick = TICK_INTERVAL
            while tick <= horizon:
                self._push(tick, "tick", node_id)
                tick += TICK_INTERVAL
        while self._queue:
            time, _, kind, payload = heapq.heappop(self._queue)
            if time > horizon:
                break
            if kind == "traffic":
                self._on_traffic(time, payload)
            elif kind == "tick":
                self._on_tick(time, payload)
            elif kind == "tx_request":
                node_id, pkt, tx_kind = payload
                self._on_tx_request(time, node_id, pkt, tx_kind)
            elif kind == "tx_start":
                node_id, pkt, tx_kind = payload
                self._on_tx_start(time, node_id, pkt, tx_kind)
            elif kind == "rx_end":
                self._on_rx_end(time, payload)
        return self.result

    # -- handlers ------------------------------------------------------------

    def _on_traffic(self, now: float, t) -> None:
        src_ids = self._guwal_to_ids.get(t.src)
        if not src_ids:
            return
        node_id = src_ids[0]
        node = self.nodes[node_id]
        pad = self._pad_counter.get(t.src, 0)
        self._pad_counter[t.src] = pad + 1
        frames = chunk_message(t.text, src=t.src, dst=t.dst, ack_requested=t.ack, pad=pad)
        for frame in frames:
            key = (frame.header.src, frame.header.dst, frame.crc)
            self.result.originations[key] = (now, node_id, frame)
            self.trace.add(
                now, node_id, "originate",
                src=frame.header.src, dst=frame.header.dst, crc=f"{frame.crc:#06x}",
            )
            self._process_actions(node_id, node.originate(frame, now), now)

    def _on_tick(self, now: float, node_id: str) -> None:
        self._process_actions(node_id, self.nodes[node_id].on_timer(now), now)

    def _process_actions(self, node_id: str, actions, now: float, pkt: NetPacket | None = None) -> None:
        for act in actions:
            if isinstance(act, (Forward, SendAck, Retransmit)):
                if isinstance(act, SendAck):
                    tx_kind = "ack"
                elif isinstance(act, Retransmit):
                    tx_kind = f"retransmit#{act.attempt}"
                    key = act.pkt.key
                    self.result.retransmits[key] = self.result.retransmits.get(key, 0) + 1
                else:
                    tx_kind = act.kind
                self._push(now + act.delay, "tx_request", (node_id, act.pkt, tx_kind))
            elif isinstance(act, Deliver):
                self._on_deliver(now, node_id, act.frame, pkt)
            elif isinstance(act, LearnRoute):
                e = act.entry
                self.trace.add(
                    now, node_id, "learn_route",
                    dest=e.dest_guwal, via=e.next_hop_net, state=e.state.value,
                )
            elif isinstance(act, Drop):
                self.trace.add(now, node_id, "drop", reason=act.reason)
            elif isinstance(act, DeliveryFailed):
                key = (act.frame.header.src, act.frame.header.dst, act.frame.crc)
                self.result.failures.append((now, node_id, key))
                self.trace.add(
                    now, node_id, "delivery_failed",
                    dst=act.frame.header.dst, crc=f"{act.frame.crc:#06x}",
                )
            elif isinstance(act, RouteInvalidated):
                self.trace.add(
                    now, node_id, "route_invalidated",
                    dest=act.dest_guwal, via=act.next_hop_net, reason=act.reason,
                )

    def _on_deliver(self, now: float, node_id: str, frame: GuwalFrame, pkt: NetPacket | None) -> None:
        key = (frame.header.src, frame.header.dst, frame.crc)
        is_ack = frame.header.frame_type is FrameType.ACK
        if is_ack:
            self.trace.add(now, node_id, "ack_received", src=frame.header.src)
            return
        origin = self.result.originations.get(key)
        latency = now - origin[0] if origin else None
        self.result.deliveries.append((now, node_id, key, latency))
        self.trace.add(
            now, node_id, "deliver",
            src=frame.header.src, dst=frame.header.dst,
            crc=f"{frame.crc:#06x}",
            latency=f"{latency:.3f}" if latency is not None else "?",
            text=frame.text,
        )
        sink = self.sinks.get(node_id)
        if sink is not None:
            raw = np.packbits(encode_net(pkt)).tobytes() if pkt is not None else None
            sink(frame, now, raw)

    def _on_tx_request(self, now: float, node_id: str, pkt: NetPacket, tx_kind: str) -> None:
        start = max(now, self._busy_until[node_id])
        self._busy_until[node_id] = start + self.airtime
        if start > now:
            self._push(start, "tx_start", (node_id, pkt, tx_kind))
        else:
            self._on_tx_start(now, node_id, pkt, tx_kind)

    def _on_tx_start(self, now: float, node_id: str, pkt: NetPacket, tx_kind: str) -> None:
        end = now + self.airtime
        self._tx_intervals[node_id].append((now, end))
        self.trace.add(
            now, node_id, "tx",
            mode=tx_kind, transmitter=pkt.net.transmitter, last_hop=pkt.net.last_hop,
            src=pkt.frame.header.src, dst=pkt.frame.header.dst,
            crc=f"{pkt.frame.crc:#06x}",
        )
        for link in self.scenario.links:
            if link.a == node_id:
                rx_id = link.b
            elif link.b == node_id:
                rx_id = link.a
            else:
                continue
            delay = link.distance_m / self.model.speed_of_sound
            arr = _Arrival(
                rx_id=rx_id,
                tx_id=node_id,
                start=now + delay,
                end=end + delay,
                pkt=pkt,
                link=link,
                distance=link.distance_m,
                tx_kind=tx_kind,
                uid=next(self._uid),
            )
            self._arrivals[rx_id].append(arr)
            self._push(arr.end, "rx_end", arr)
            if self.wav_dump is not None:
                self.wav_dump(link, pkt, now, node_id, rx_id)

    def _on_rx_end(self, now: float, arr: _Arrival) -> None:
        rx = arr.rx_id
        # keep ended arrivals around until nothing can overlap them anymore,
        # so both frames of a collision see each other regardless of order
        arrivals = [a for a in self._arrivals[rx] if a.end > arr.start]
        self._arrivals[rx] = arrivals
        self._tx_intervals[rx] = [iv for iv in self._tx_intervals[rx] if iv[1] > arr.start]
        # half-duplex: receiving while transmitting loses the frame
        for (t0, t1) in self._tx_intervals[rx]:
            if not (arr.end <= t0 or arr.start >= t1):
                self.trace.add(now, rx, "rx_lost", reason="half-duplex", frm=arr.tx_id)
                return
        # collision: any other overlapping arrival destroys both
        for other in arrivals:
            if other.uid != arr.uid and not (arr.end <= other.start or arr.start >= other.end):
                self.trace.add(now, rx, "rx_lost", reason="collision", frm=arr.tx_id)
                return
        blocked = arr.link.blocked_during(arr.start, arr.end)
        snr = self.model.link_snr_db(
            arr.distance,
            self.cfg.center_freq,
            blocked=blocked,
            rx_penalty_db=self._rx_penalty[rx],
        )
        if snr < self.model.decode_snr_db:
            reason = "blocked" if blocked else "low_snr"
            self.trace.add(
                now, rx, "rx_lost", reason=reason, frm=arr.tx_id, snr=f"{snr:.1f}"
            )
            return
        self.trace.add(
            now, rx, "rx",
            frm=arr.tx_id, mode=arr.tx_kind, snr=f"{snr:.1f}",
            src=arr.pkt.frame.header.src, dst=arr.pkt.frame.header.dst,
            crc=f"{arr.pkt.frame.crc:#06x}",
        )
        node = self.nodes[rx]
        self._process_actions(rx, node.handle_inbound(arr.pkt, now), now, pkt=arr.pkt)


def run_scenario(scenario: Scenario, sinks: dict | None = None, wav_dump=None) -> SimResult:
    return Simulator(scenario, sinks=sinks, wav_dump=wav_dump).run()


def make_wav_dumper(out_dir: str | Path, scenario: Scenario, link_spec: str):
    """Dump the receiver-side signal of every transmission crossing one link.

    ``link_spec`` is "a,b" (node ids).  Returns a callable for
    run_scenario(wav_dump=...).
    """
    from ..audio import write_wav

    a, b = [s.strip() for s in link_spec.split(",")]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = get_profile(scenario.profile)
    counter = itertools.count()
    rng = np.random.default_rng(scenario.rng_seed + 77)

    def dump(link: LinkSpec, pkt: NetPacket, now: float, tx_id: str, rx_id: str) -> None:
        if {link.a, link.b} != {a, b}:
            return
        tx_buf = modulate_packet(encode_net(pkt), cfg)
        rx_buf = propagate(
            tx_buf,
            link.distance_m,
            scenario.channel,
            rng,
            center_freq=cfg.center_freq,
            blocked=link.blocked_during(now, now + tx_buf.duration),
        )
        n = next(counter)
        write_wav(out / f"link_{tx_id}_to_{rx_id}_{n:03d}_t{now:.1f}.wav", rx_buf)

    return dump
