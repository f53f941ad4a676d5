"""GUWMANET reactive mesh routing.

The 10-bit network header carries the current transmitter and a "last hop"
address, both 5 bits.  First messages flood: every forwarder rewrites the
transmitter to itself and sets last hop to the neighbor it first received
the message from, so a neighbor overhearing its own address there learns it
was selected and gains a (temporary) route toward the frame's destination.
The destination's acknowledgement travels back along the reverse-path
entries created at first reception, and every hop it touches persists the
route.  Established routes are used by naming the chosen next hop in the
last-hop field; nodes that hold a route but are not named stay silent when
the packet is already heading their way.

Recovery: a unicast forwarder expects to overhear its next hop continue
(or acknowledge) within a timeout, otherwise the entry is invalidated; a
source that exhausts its three retransmissions deletes the route so the
next attempt floods again.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .guwal import FrameType, GuwalFrame, LengthError, ack_token, decode_frame, make_ack

NET_ADDR_MAX = 31
NET_HEADER_BITS = 10
PACKET_BITS = 138


@dataclass(frozen=True)
class NetHeader:
    transmitter: int
    last_hop: int

    def __post_init__(self) -> None:
        for name, v in (("transmitter", self.transmitter), ("last_hop", self.last_hop)):
            if not 0 <= v <= NET_ADDR_MAX:
                raise ValueError(f"{name} out of range: {v}")


@dataclass(frozen=True)
class NetPacket:
    net: NetHeader
    frame: GuwalFrame

    @property
    def key(self) -> tuple[int, int, int]:
        """Dedup key: end-to-end addresses plus the frame CRC."""
        h = self.frame.header
        return (h.src, h.dst, self.frame.crc)


def _bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def _bits_to_bytes(bits: np.ndarray) -> bytes:
    return np.packbits(bits.astype(np.uint8)).tobytes()


def encode_net(pkt: NetPacket) -> np.ndarray:
    """138-bit wire image: 5-bit transmitter, 5-bit last hop, 128 frame bits."""
    head = np.zeros(NET_HEADER_BITS, dtype=np.uint8)
    for i in range(5):
        head[i] = (pkt.net.transmitter >> (4 - i)) & 1
        head[5 + i] = (pkt.net.last_hop >> (4 - i)) & 1
    return np.concatenate([head, _bytes_to_bits(pkt.frame.to_bytes())])


def decode_net(bits: np.ndarray) -> NetPacket:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape != (PACKET_BITS,):
        raise LengthError(f"net packet must be {PACKET_BITS} bits, got {bits.shape}")
    transmitter = int(bits[:5] @ (1 << np.arange(4, -1, -1)))
    last_hop = int(bits[5:10] @ (1 << np.arange(4, -1, -1)))
    frame = decode_frame(_bits_to_bytes(bits[10:]))
    return NetPacket(net=NetHeader(transmitter, last_hop), frame=frame)


class RouteState(Enum):
    TEMPORARY = "temporary"
    PERSISTENT = "persistent"


@dataclass
class RoutingEntry:
    dest_guwal: int
    next_hop_net: int
    state: RouteState
    created_at: float
    refreshed_at: float


# ---------------------------------------------------------------------------
# Actions returned by the node state machine


@dataclass(frozen=True)
class Deliver:
    frame: GuwalFrame


@dataclass(frozen=True)
class Forward:
    pkt: NetPacket
    delay: float
    kind: str  # flood | unicast | origin-flood | origin-unicast


@dataclass(frozen=True)
class SendAck:
    pkt: NetPacket
    delay: float


@dataclass(frozen=True)
class Retransmit:
    pkt: NetPacket
    delay: float
    attempt: int


@dataclass(frozen=True)
class LearnRoute:
    entry: RoutingEntry


@dataclass(frozen=True)
class Drop:
    reason: str
    key: tuple[int, int, int] | None = None


@dataclass(frozen=True)
class DeliveryFailed:
    frame: GuwalFrame


@dataclass(frozen=True)
class RouteInvalidated:
    dest_guwal: int
    next_hop_net: int
    reason: str


Action = object  # union of the dataclasses above

TRANSMIT_ACTIONS = (Forward, SendAck, Retransmit)


@dataclass
class RoutingConfig:
    ack_timeout: float = 45.0
    max_retries: int = 3
    temp_route_lifetime: float = 90.0
    dedup_lifetime: float = 120.0
    flood_jitter: float = 2.0
    unicast_turnaround: float = 0.2
    ack_turnaround: float = 8.5
    ack_suppress_window: float = 8.0
    reforward_guard: float = 20.0
    implicit_ack_timeout: float = 25.0


@dataclass
class _DedupEntry:
    first_time: float
    first_from: int
    last_forward_time: float | None = None
    delivered: bool = False
    last_ack_time: float | None = None

    def touched(self) -> float:
        return max(
            self.first_time,
            self.last_forward_time or 0.0,
            self.last_ack_time or 0.0,
        )


@dataclass
class _Pending:
    frame: GuwalFrame
    retries: int
    next_retry: float


@dataclass
class _Expectation:
    next_hop: int
    dest_guwal: int
    deadline: float


class NodeState:
    """Deterministic per-node protocol state machine.

    All randomness (flood jitter) comes from the injected seeded RNG, so a
    node's behavior is a pure function of (events, now, seed).
    """

    def __init__(
        self,
        net_addr: int,
        guwal_addr: int,
        rng: np.random.Generator | int | None = None,
        config: RoutingConfig | None = None,
    ):
        if not 0 <= net_addr <= NET_ADDR_MAX:
            raise ValueError(f"net_addr out of range: {net_addr}")
        if not 0 <= guwal_addr <= 63:
            raise ValueError(f"guwal_addr out of range: {guwal_addr}")
        self.net_addr = net_addr
        self.guwal_addr = guwal_addr
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.config = config or RoutingConfig()
        self.routes: dict[int, RoutingEntry] = {}
        self.dedup: dict[tuple[int, int, int], _DedupEntry] = {}
        self.pending: dict[tuple[int, int, int], _Pending] = {}
        self.expectations: list[_Expectation] = []

    # -- helpers ------------------------------------------------------------

    def _route(self, dest_guwal: int) -> RoutingEntry | None:
        return self.routes.get(dest_guwal)

    def _learn(
        self,
        dest_guwal: int,
        via: int,
        state: RouteState,
        now: float,
        actions: list[Action],
    ) -> None:
        if dest_guwal == self.guwal_addr or via == self.net_addr:
            return
        existing = self.routes.get(dest_guwal)
        if existing is not None and existing.state is RouteState.PERSISTENT:
            if state is RouteState.TEMPORARY:
                return  # never downgrade
            existing.next_hop_net = via
            existing.refreshed_at = now
            return
        if (
            existing is not None
            and existing.state is state
            and existing.next_hop_net == via
        ):
            existing.refreshed_at = now
            return
        entry = RoutingEntry(dest_guwal, via, state, created_at=now, refreshed_at=now)
        self.routes[dest_guwal] = entry
        actions.append(LearnRoute(entry))

    def _promote(self, dest_guwal: int, now: float) -> None:
        entry = self.routes.get(dest_guwal)
        if entry is not None and entry.state is RouteState.TEMPORARY:
            entry.state = RouteState.PERSISTENT
            entry.refreshed_at = now

    def _note_activity(self, transmitter: int) -> None:
        self.expectations = [e for e in self.expectations if e.next_hop != transmitter]

    def _expect_continuation(self, next_hop: int, dest_guwal: int, now: float) -> None:
        self.expectations.append(
            _Expectation(next_hop, dest_guwal, now + self.config.implicit_ack_timeout)
        )

    def _flood_jitter(self) -> float:
        return float(self.rng.uniform(0.0, self.config.flood_jitter))

    # -- origination ---------------------------------------------------------

    def originate(self, frame: GuwalFrame, now: float) -> list[Action]:
        """Inject a locally generated frame (frame.src must be this node)."""
        if frame.header.src != self.guwal_addr:
            raise ValueError("originated frame src must match node guwal address")
        actions: list[Action] = []
        key = (frame.header.src, frame.header.dst, frame.crc)
        self.dedup[key] = _DedupEntry(
            first_time=now, first_from=self.net_addr, last_forward_time=now
        )
        pkt, kind = self._build_origin_packet(frame)
        actions.append(Forward(pkt, delay=0.0, kind=kind))
        if frame.header.ack_requested:
            self.pending[key] = _Pending(
                frame=frame, retries=0, next_retry=now + self.config.ack_timeout
            )
            if kind == "origin-unicast":
                self._expect_continuation(pkt.net.last_hop, frame.header.dst, now)
        return actions

    def _build_origin_packet(self, frame: GuwalFrame) -> tuple[NetPacket, str]:
        is_ack = frame.header.frame_type is FrameType.ACK
        route = self._route(frame.header.dst)
        usable = route is not None and (is_ack or route.state is RouteState.PERSISTENT)
        if usable:
            net = NetHeader(self.net_addr, route.next_hop_net)
            return NetPacket(net, frame), "origin-unicast"
        net = NetHeader(self.net_addr, self.net_addr)  # self-reference marks origin
        return NetPacket(net, frame), "origin-flood"

    # -- inbound -------------------------------------------------------------

    def handle_inbound(self, pkt: NetPacket, now: float) -> list[Action]:
        actions: list[Action] = []
        cfg = self.config
        frame = pkt.frame
        t, lh = pkt.net.transmitter, pkt.net.last_hop
        key = pkt.key
        is_ack = frame.header.frame_type is FrameType.ACK

        self._note_activity(t)

        entry = self.dedup.get(key)
        fresh = entry is None
        if fresh:
            entry = _DedupEntry(first_time=now, first_from=t)
            self.dedup[key] = entry

        # reverse-path learning: first reception points back toward the source
        if fresh and frame.header.src != self.guwal_addr:
            state = RouteState.PERSISTENT if is_ack else RouteState.TEMPORARY
            self._learn(frame.header.src, t, state, now, actions)
        # overheard selection: a neighbor echoing our own recent forward with
        # our address in last_hop is our continuation toward the frame's
        # destination; the same naming long after our forward just means we
        # were picked as a relay, which teaches nothing about direction
        if not fresh and lh == self.net_addr and t != self.net_addr:
            echo_of_own_forward = (
                entry.last_forward_time is not None
                and now - entry.last_forward_time < cfg.reforward_guard
            )
            if echo_of_own_forward and frame.header.dst != self.guwal_addr:
                self._learn(frame.header.dst, t, RouteState.TEMPORARY, now, actions)

        if frame.header.dst == self.guwal_addr:
            self._handle_as_destination(pkt, entry, fresh, now, actions)
            return actions

        # forwarding role: duplicates are suppressed only within the guard
        # window, so retransmission waves propagate again
        past_guard = (
            entry.last_forward_time is None
            or now - entry.last_forward_time >= cfg.reforward_guard
        )
        if not fresh and not past_guard:
            actions.append(Drop("duplicate", key))
            return actions
        named = lh == self.net_addr and t != self.net_addr

        route = self._route(frame.header.dst)
        if named:
            if route is not None:
                self._forward_unicast(pkt, route, entry, is_ack, now, actions)
            else:
                self._forward_flood(pkt, entry, now, actions)
        elif route is None:
            self._forward_flood(pkt, entry, now, actions)
        elif route.next_hop_net in (t, lh):
            actions.append(Drop("redundant", key))
        else:
            self._forward_unicast(pkt, route, entry, is_ack, now, actions)
        return actions

    def _handle_as_destination(
        self,
        pkt: NetPacket,
        entry: _DedupEntry,
        fresh: bool,
        now: float,
        actions: list[Action],
    ) -> None:
        cfg = self.config
        frame = pkt.frame
        if frame.header.frame_type is FrameType.ACK:
            if not fresh:
                actions.append(Drop("duplicate-ack", pkt.key))
                return
            actions.append(Deliver(frame))
            token = ack_token(frame)
            for key, p in list(self.pending.items()):
                if p.frame.crc == token and p.frame.header.dst == frame.header.src:
                    del self.pending[key]
            return
        if fresh:
            entry.delivered = True
            actions.append(Deliver(frame))
        else:
            actions.append(Drop("duplicate", pkt.key))
        if frame.header.ack_requested:
            recently_acked = (
                entry.last_ack_time is not None
                and now - entry.last_ack_time < cfg.ack_suppress_window
            )
            if recently_acked:
                return
            ack = make_ack(frame)
            ack_key = (ack.header.src, ack.header.dst, ack.crc)
            if ack_key in self.dedup:
                return  # another destination of a multicast address acked first
            self.dedup[ack_key] = _DedupEntry(
                first_time=now, first_from=self.net_addr, last_forward_time=now
            )
            entry.last_ack_time = now
            ack_pkt, _ = self._build_origin_packet(ack)
            actions.append(SendAck(ack_pkt, delay=cfg.ack_turnaround))

    def _forward_unicast(
        self,
        pkt: NetPacket,
        route: RoutingEntry,
        entry: _DedupEntry,
        is_ack: bool,
        now: float,
        actions: list[Action],
    ) -> None:
        out = NetPacket(NetHeader(self.net_addr, route.next_hop_net), pkt.frame)
        entry.last_forward_time = now
        if is_ack:
            # the route carrying an ack back is persisted at every hop
            self._promote(pkt.frame.header.dst, now)
        elif pkt.frame.header.ack_requested:
            self._expect_continuation(route.next_hop_net, pkt.frame.header.dst, now)
        route.refreshed_at = now
        actions.append(Forward(out, delay=self.config.unicast_turnaround, kind="unicast"))

    def _forward_flood(
        self,
        pkt: NetPacket,
        entry: _DedupEntry,
        now: float,
        actions: list[Action],
    ) -> None:
        out = NetPacket(NetHeader(self.net_addr, entry.first_from), pkt.frame)
        entry.last_forward_time = now
        actions.append(Forward(out, delay=self._flood_jitter(), kind="flood"))

    # -- timers --------------------------------------------------------------

    def on_timer(self, now: float) -> list[Action]:
        actions: list[Action] = []
        cfg = self.config

        # implicit-ack expectations: silence from a selected next hop kills
        # the route through it
        still = []
        for exp in self.expectations:
            if exp.deadline > now:
                still.append(exp)
                continue
            route = self.routes.get(exp.dest_guwal)
            if route is not None and route.next_hop_net == exp.next_hop:
                del self.routes[exp.dest_guwal]
                actions.append(
                    RouteInvalidated(exp.dest_guwal, exp.next_hop, "no continuation overheard")
                )
        self.expectations = still

        # retransmissions
        for key, p in list(self.pending.items()):
            if p.next_retry > now:
                continue
            if p.retries >= cfg.max_retries:
                del self.pending[key]
                self.routes.pop(p.frame.header.dst, None)
                actions.append(DeliveryFailed(p.frame))
                continue
            p.retries += 1
            p.next_retry = now + cfg.ack_timeout
            entry = self.dedup.get(key)
            if entry is None:
                entry = _DedupEntry(first_time=now, first_from=self.net_addr)
                self.dedup[key] = entry
            entry.last_forward_time = now
            pkt, kind = self._build_origin_packet(p.frame)
            if kind == "origin-unicast" and p.frame.header.ack_requested:
                self._expect_continuation(pkt.net.last_hop, p.frame.header.dst, now)
            actions.append(Retransmit(pkt, delay=0.0, attempt=p.retries))

        # expiry of temporary routes and stale dedup entries
        for dest, route in list(self.routes.items()):
            if (
                route.state is RouteState.TEMPORARY
                and now - route.refreshed_at > cfg.temp_route_lifetime
            ):
                del self.routes[dest]
        for key, entry in list(self.dedup.items()):
            if now - entry.touched() > cfg.dedup_lifetime:
                del self.dedup[key]
        return actions
