"""Scenario files: the simulated world.

UTF-8 JSON with a versioned schema (see docs/PROTOCOL.md).  Connectivity
is an explicit link list -- the interconnection measurements are corridor /
through-doorway path lengths that need not embed in the plane, so each link
carries its own distance (defaulting to the euclidean distance between the
node positions).  Net addresses must be unique within every 2-hop
neighborhood; this is validated at load time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..guwmanet import RoutingConfig
from ..phy import get_profile
from .model import ChannelModel

SCHEMA_VERSION = 1

ROLES = ("drone", "victim", "attacker")


class ScenarioError(ValueError):
    """Scenario validation failure; the message names the offending field."""


@dataclass
class NodeSpec:
    id: str
    net_addr: int
    guwal_addr: int
    pos: tuple[float, float] = (0.0, 0.0)
    role: str = "drone"
    ec_enabled: bool = True
    rx_filter_cutoff_hz: float | None = None  # guard lowpass at the receiver


@dataclass
class LinkSpec:
    a: str
    b: str
    distance_m: float
    blocked: list[tuple[float, float]] = field(default_factory=list)

    def blocked_during(self, t0: float, t1: float) -> bool:
        return any(not (t1 <= b0 or t0 >= b1) for (b0, b1) in self.blocked)


@dataclass
class TrafficSpec:
    time: float
    src: int  # guwal address
    dst: int
    text: str
    ack: bool = True


@dataclass
class Scenario:
    name: str
    nodes: list[NodeSpec]
    links: list[LinkSpec]
    traffic: list[TrafficSpec]
    channel: ChannelModel = field(default_factory=ChannelModel)
    routing: RoutingConfig = field(default_factory=RoutingConfig)
    profile: str = "ultrasonic-21k"
    rng_seed: int = 0
    duration: float | None = None  # event-time horizon; default: derived

    def node_by_id(self, node_id: str) -> NodeSpec:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise ScenarioError(f"unknown node id {node_id!r}")

    def neighbors(self, node_id: str) -> list[str]:
        out = []
        for l in self.links:
            if l.a == node_id:
                out.append(l.b)
            elif l.b == node_id:
                out.append(l.a)
        return out

    def link_between(self, a: str, b: str) -> LinkSpec | None:
        for l in self.links:
            if {l.a, l.b} == {a, b}:
                return l
        return None

    def validate(self) -> None:
        get_profile(self.profile)
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ScenarioError("nodes: duplicate node ids")
        for n in self.nodes:
            if not 0 <= n.net_addr <= 31:
                raise ScenarioError(f"nodes[{n.id}].net_addr: out of range 0-31")
            if not 0 <= n.guwal_addr <= 63:
                raise ScenarioError(f"nodes[{n.id}].guwal_addr: out of range 0-63")
            if n.role not in ROLES:
                raise ScenarioError(f"nodes[{n.id}].role: must be one of {ROLES}")
        for l in self.links:
            for end in (l.a, l.b):
                if end not in ids:
                    raise ScenarioError(f"links: unknown node id {end!r}")
            if l.a == l.b:
                raise ScenarioError(f"links: self-link on {l.a!r}")
            if l.distance_m <= 0:
                raise ScenarioError(f"links[{l.a}-{l.b}].distance_m: must be positive")
        for t in self.traffic:
            if not any(n.guwal_addr == t.src for n in self.nodes):
                raise ScenarioError(f"traffic: no node owns src address {t.src}")
        # net addresses unique within every 2-hop neighborhood
        for n in self.nodes:
            hood: set[str] = set()
            for nb in self.neighbors(n.id):
                hood.add(nb)
                hood.update(self.neighbors(nb))
            hood.discard(n.id)
            for other_id in hood:
                other = self.node_by_id(other_id)
                if other.net_addr == n.net_addr:
                    raise ScenarioError(
                        f"nodes: net_addr {n.net_addr} reused within 2 hops "
                        f"({n.id!r} and {other_id!r})"
                    )


def _euclid(a: NodeSpec, b: NodeSpec) -> float:
    return ((a.pos[0] - b.pos[0]) ** 2 + (a.pos[1] - b.pos[1]) ** 2) ** 0.5


def scenario_from_dict(doc: dict) -> Scenario:
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")
    try:
        nodes = [
            NodeSpec(
                id=str(n["id"]),
                net_addr=int(n["net_addr"]),
                guwal_addr=int(n["guwal_addr"]),
                pos=tuple(n.get("pos", (0.0, 0.0))),
                role=n.get("role", "drone"),
                ec_enabled=bool(n.get("ec_enabled", True)),
                rx_filter_cutoff_hz=n.get("rx_filter_cutoff_hz"),
            )
            for n in doc["nodes"]
        ]
    except KeyError as e:
        raise ScenarioError(f"nodes: missing field {e}") from None
    by_id = {n.id: n for n in nodes}
    links = []
    for l in doc.get("links", []):
        a, b = str(l["a"]), str(l["b"])
        if "distance_m" in l:
            dist = float(l["distance_m"])
        elif a in by_id and b in by_id:
            dist = _euclid(by_id[a], by_id[b])
        else:
            raise ScenarioError(f"links[{a}-{b}]: unknown endpoints and no distance_m")
        links.append(
            LinkSpec(
                a=a,
                b=b,
                distance_m=dist,
                blocked=[tuple(iv) for iv in l.get("blocked", [])],
            )
        )
    traffic = [
        TrafficSpec(
            time=float(t["time"]),
            src=int(t["src"]),
            dst=int(t["dst"]),
            text=str(t["text"]),
            ack=bool(t.get("ack", True)),
        )
        for t in doc.get("traffic", [])
    ]
    channel = ChannelModel(**doc.get("channel", {}))
    routing = RoutingConfig(**doc.get("routing", {}))
    scen = Scenario(
        name=str(doc.get("name", "scenario")),
        nodes=nodes,
        links=links,
        traffic=traffic,
        channel=channel,
        routing=routing,
        profile=doc.get("profile", "ultrasonic-21k"),
        rng_seed=int(doc.get("rng_seed", 0)),
        duration=doc.get("duration"),
    )
    scen.validate()
    return scen


def load_scenario(path: str | Path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ScenarioError(f"invalid JSON at line {e.lineno}: {e.msg}") from None
    return scenario_from_dict(doc)
