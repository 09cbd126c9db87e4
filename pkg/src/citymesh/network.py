"""Simulated transports: the covert inter-light mesh, street-light access
points, central-server links, device-to-device links, discovery, manual
pairing, and failure injection.

The link model reproduces the measured covert-channel behavior: throughput
depends only on distance, never on the bandwidth mode, so a narrowed
(covert) channel costs nothing in speed. Default anchors are 96 kbit/s at
1 m, 92 at 10 m, 88 at 50 m, linearly interpolated, extrapolated past the
last anchor and floored at zero.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from enum import Enum

from .core import CityMeshError, NodeId, NodeKind, SimTime


class LinkModelError(CityMeshError):
    """Invalid input to the throughput/latency model."""


class TopologyError(CityMeshError):
    """A delivery or failure referenced nodes or links that do not exist."""


class PairingError(CityMeshError):
    """Manual QR pairing failed (token mismatch or non-device endpoints)."""


class BandwidthMode(Enum):
    NARROW_8MHZ = "8MHz"
    MID_16MHZ = "16MHz"
    STANDARD_20MHZ = "20MHz"

    @property
    def covert(self) -> bool:
        """Narrowed modes are invisible to off-the-shelf receivers."""
        return self is not BandwidthMode.STANDARD_20MHZ


MAX_LINK_DISTANCE_M = 100.0
DEFAULT_ANCHORS: tuple[tuple[float, float], ...] = ((1.0, 96.0), (10.0, 92.0), (50.0, 88.0))
DEFAULT_PROCESSING_MS = 5.0


@dataclass(frozen=True)
class LinkProfile:
    mode: BandwidthMode
    distance_m: float
    encrypted: bool | None = None  # None: derived from covertness

    def __post_init__(self) -> None:
        if not 0 < self.distance_m <= MAX_LINK_DISTANCE_M:
            raise ValueError(
                f"link distance must be in (0, {MAX_LINK_DISTANCE_M:g}] m, got {self.distance_m}"
            )
        if self.encrypted is None:
            object.__setattr__(self, "encrypted", self.mode.covert)
        elif self.mode.covert and not self.encrypted:
            raise ValueError("covert links are always encrypted")


class LinkKind(Enum):
    CLIENT_SERVER = "server"
    LIGHT_AP = "ap"
    COVERT_MESH = "mesh"
    DEVICE_TO_DEVICE = "d2d"


LinkKey = tuple[NodeId, NodeId, LinkKind]


@dataclass(frozen=True)
class Link:
    """Undirected link; endpoints are stored in canonical sort order."""

    a: NodeId
    b: NodeId
    kind: LinkKind
    profile: LinkProfile
    down_causes: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.a == self.b:
            raise TopologyError(f"self-link at {self.a}")
        if self.b.sort_key < self.a.sort_key:
            a, b = self.a, self.b
            object.__setattr__(self, "a", b)
            object.__setattr__(self, "b", a)

    @property
    def up(self) -> bool:
        return not self.down_causes

    @property
    def key(self) -> LinkKey:
        return (self.a, self.b, self.kind)

    @property
    def label(self) -> str:
        return f"{self.a}--{self.b}/{self.kind.value}"

    def touches(self, node: NodeId) -> bool:
        return node in (self.a, self.b)

    def other(self, node: NodeId) -> NodeId:
        return self.b if node == self.a else self.a


def _link_sort_key(link: Link) -> tuple:
    return (link.a.sort_key, link.b.sort_key, link.kind.value)


@dataclass(frozen=True)
class Topology:
    """Nodes and links of the simulated city; functionally updated."""

    nodes: frozenset[NodeId]
    links: tuple[Link, ...] = ()

    def __post_init__(self) -> None:
        seen: set[LinkKey] = set()
        for link in self.links:
            if link.a not in self.nodes or link.b not in self.nodes:
                raise TopologyError(f"link {link.label} references undeclared nodes")
            if link.key in seen:
                raise TopologyError(f"duplicate link {link.label}")
            seen.add(link.key)
        object.__setattr__(self, "links", tuple(sorted(self.links, key=_link_sort_key)))

    def find_link(self, a: NodeId, b: NodeId, kind: LinkKind) -> Link | None:
        if b.sort_key < a.sort_key:
            a, b = b, a
        for link in self.links:
            if link.key == (a, b, kind):
                return link
        return None

    def with_link(self, link: Link) -> "Topology":
        rest = tuple(l for l in self.links if l.key != link.key)
        return replace(self, links=rest + (link,))

    def links_of(self, node: NodeId) -> tuple[Link, ...]:
        return tuple(l for l in self.links if l.touches(node))

    def up_links_of(self, node: NodeId) -> tuple[Link, ...]:
        return tuple(l for l in self.links if l.up and l.touches(node))


def link_throughput(
    p: LinkProfile, anchors: tuple[tuple[float, float], ...] = DEFAULT_ANCHORS
) -> float:
    """Throughput in kbit/s; a function of distance only, never of the
    bandwidth mode."""
    return throughput_at(p.distance_m, anchors)


def throughput_at(
    distance_m: float, anchors: tuple[tuple[float, float], ...] = DEFAULT_ANCHORS
) -> float:
    if distance_m <= 0:
        raise LinkModelError(f"distance must be positive, got {distance_m}")
    if not anchors:
        raise LinkModelError("throughput model needs at least one anchor")
    if distance_m <= anchors[0][0]:
        return anchors[0][1]
    for (d0, v0), (d1, v1) in zip(anchors, anchors[1:]):
        if distance_m <= d1:
            return v0 + (distance_m - d0) * (v1 - v0) / (d1 - d0)
    if len(anchors) == 1:
        return anchors[0][1]
    (d0, v0), (d1, v1) = anchors[-2], anchors[-1]
    slope = (v1 - v0) / (d1 - d0)
    return max(0.0, v1 + (distance_m - d1) * slope)


def transmit_time(
    payload_bits: int,
    p: LinkProfile,
    anchors: tuple[tuple[float, float], ...] = DEFAULT_ANCHORS,
) -> float:
    """Seconds to push ``payload_bits`` over the link; inf when the
    extrapolated throughput has hit zero."""
    if payload_bits <= 0:
        raise LinkModelError(f"payload must be positive, got {payload_bits} bits")
    kbps = link_throughput(p, anchors)
    if kbps <= 0:
        return math.inf
    return payload_bits / (kbps * 1000.0)


def sensor_bitrate(n_sensors: int, bits_per_reading: int, interval_s: float) -> float:
    """Per-light telemetry rate in kbit/s at the given sampling interval."""
    if n_sensors <= 0 or bits_per_reading <= 0 or interval_s <= 0:
        raise LinkModelError("sensor bitrate inputs must be positive")
    return (n_sensors * bits_per_reading) / (interval_s * 1000.0)


def capacity_budget(link_kbps: float, per_node_kbps: float) -> int:
    """How many emitters of ``per_node_kbps`` fit into one link."""
    if link_kbps <= 0 or per_node_kbps <= 0:
        raise LinkModelError("capacity inputs must be positive")
    return math.floor(link_kbps / per_node_kbps)


@dataclass(frozen=True)
class Delivery:
    """A routed transmission; ``at`` is the arrival tick (latency rounded up
    to the millisecond grid, the exact figure stays in ``latency_ms``)."""

    source: NodeId
    dest: NodeId
    payload_bits: int
    latency_ms: float
    path: tuple[NodeId, ...]
    at: SimTime

    @property
    def hops(self) -> tuple[tuple[NodeId, NodeId], ...]:
        return tuple(zip(self.path, self.path[1:]))


def deliver(
    topology: Topology,
    source: NodeId,
    dest: NodeId,
    payload_bits: int,
    now: SimTime,
    processing_ms: float = DEFAULT_PROCESSING_MS,
    anchors: tuple[tuple[float, float], ...] = DEFAULT_ANCHORS,
) -> Delivery | None:
    """Route over the minimum-latency up-path, or None when unreachable.

    Covert mesh hops carry only street-light and command-center traffic:
    they are excluded whenever either endpoint is a citizen device.
    """
    if source == dest:
        raise TopologyError("source and destination must differ")
    for node in (source, dest):
        if node not in topology.nodes:
            raise TopologyError(f"unknown node {node}")
    citizen_traffic = NodeKind.CITIZEN_DEVICE in (source.kind, dest.kind)

    adjacency: dict[NodeId, list[tuple[float, NodeId, Link]]] = {}
    for link in topology.links:
        if not link.up:
            continue
        if citizen_traffic and link.kind is LinkKind.COVERT_MESH:
            continue
        seconds = transmit_time(payload_bits, link.profile, anchors)
        if not math.isfinite(seconds):
            continue
        cost = seconds * 1000.0 + processing_ms
        adjacency.setdefault(link.a, []).append((cost, link.b, link))
        adjacency.setdefault(link.b, []).append((cost, link.a, link))
    for edges in adjacency.values():
        edges.sort(key=lambda e: (e[0], e[1].sort_key))

    best: dict[NodeId, float] = {source: 0.0}
    prev: dict[NodeId, NodeId] = {}
    heap: list[tuple[float, tuple, NodeId]] = [(0.0, source.sort_key, source)]
    visited: set[NodeId] = set()
    while heap:
        cost, _, node = heapq.heappop(heap)
        if node in visited:
            continue
        visited.add(node)
        if node == dest:
            break
        for edge_cost, peer, _link in adjacency.get(node, ()):
            total = cost + edge_cost
            if peer not in best or total < best[peer]:
                best[peer] = total
                prev[peer] = node
                heapq.heappush(heap, (total, peer.sort_key, peer))
    if dest not in visited:
        return None

    path = [dest]
    while path[-1] != source:
        path.append(prev[path[-1]])
    path.reverse()
    latency = best[dest]
    return Delivery(
        source=source,
        dest=dest,
        payload_bits=payload_bits,
        latency_ms=latency,
        path=tuple(path),
        at=now + math.ceil(latency),
    )


_RELAY_KINDS = (LinkKind.CLIENT_SERVER, LinkKind.LIGHT_AP)


def discover_peers(device: NodeId, topology: Topology) -> frozenset[NodeId]:
    """Citizen devices reachable through a shared up relay (the central
    server or a common street-light AP)."""
    if device.kind is not NodeKind.CITIZEN_DEVICE:
        raise TopologyError(f"{device} is not a citizen device")
    relays = {
        link.other(device)
        for link in topology.up_links_of(device)
        if link.kind in _RELAY_KINDS and link.other(device).kind is not NodeKind.CITIZEN_DEVICE
    }
    peers = set()
    for relay in relays:
        for link in topology.up_links_of(relay):
            peer = link.other(relay)
            if link.kind in _RELAY_KINDS and peer.kind is NodeKind.CITIZEN_DEVICE:
                peers.add(peer)
    peers.discard(device)
    return frozenset(peers)


def pair_manual(
    topology: Topology,
    a: NodeId,
    b: NodeId,
    token_a: bytes,
    token_b: bytes,
    profile: LinkProfile | None = None,
) -> Topology:
    """Create a device-to-device link from an out-of-band token exchange
    (QR scan); works regardless of other connectivity."""
    for node in (a, b):
        if node.kind is not NodeKind.CITIZEN_DEVICE:
            raise PairingError(f"{node} cannot take part in manual pairing")
        if node not in topology.nodes:
            raise TopologyError(f"unknown node {node}")
    if a == b:
        raise PairingError("cannot pair a device with itself")
    if token_a != token_b:
        raise PairingError("pairing tokens do not match")
    existing = topology.find_link(a, b, LinkKind.DEVICE_TO_DEVICE)
    if existing is not None and existing.up:
        return topology
    profile = profile or LinkProfile(BandwidthMode.STANDARD_20MHZ, 1.0)
    return topology.with_link(Link(a, b, LinkKind.DEVICE_TO_DEVICE, profile))


@dataclass(frozen=True)
class ServerDown:
    pass


@dataclass(frozen=True)
class LinkCut:
    a: NodeId
    b: NodeId
    kind: LinkKind


@dataclass(frozen=True)
class Partition:
    side: frozenset[NodeId]


@dataclass(frozen=True)
class Heal:
    """Undo partitions; links downed by other causes stay down."""


Failure = ServerDown | LinkCut | Partition | Heal

CAUSE_SERVER_DOWN = "server-down"
CAUSE_CUT = "cut"
CAUSE_PARTITION = "partition"


def inject_failure(topology: Topology, failure: Failure) -> Topology:
    """Apply a failure (or heal) by tagging links with down-causes; a link is
    up only while no cause applies, so repeated injection is idempotent."""
    if isinstance(failure, ServerDown):
        return _tag(topology, lambda l: l.kind is LinkKind.CLIENT_SERVER, CAUSE_SERVER_DOWN)
    if isinstance(failure, LinkCut):
        link = topology.find_link(failure.a, failure.b, failure.kind)
        if link is None:
            raise TopologyError(
                f"no {failure.kind.value} link between {failure.a} and {failure.b}"
            )
        return _tag(topology, lambda l: l.key == link.key, CAUSE_CUT)
    if isinstance(failure, Partition):
        unknown = failure.side - topology.nodes
        if unknown:
            raise TopologyError(f"partition references unknown nodes: {sorted(map(str, unknown))}")
        return _tag(
            topology,
            lambda l: (l.a in failure.side) != (l.b in failure.side),
            CAUSE_PARTITION,
        )
    if isinstance(failure, Heal):
        links = tuple(
            replace(l, down_causes=l.down_causes - {CAUSE_PARTITION}) for l in topology.links
        )
        return replace(topology, links=links)
    raise TopologyError(f"unknown failure {failure!r}")


def _tag(topology: Topology, selector, cause: str) -> Topology:
    links = tuple(
        replace(l, down_causes=l.down_causes | {cause}) if selector(l) else l
        for l in topology.links
    )
    return replace(topology, links=links)
