"""Deterministic discrete-event engine.

One global priority queue keyed by (time, insertion order) interleaves
scripted scenario events with spontaneous ones (sampling, detection,
anti-entropy sync, deliveries). Identical (scenario, seed) inputs produce
byte-identical traces and reports.

Event-stream records for light mode, guidance, sensor readings, and alerts
are emitted when the corresponding report *arrives at the command center*,
so the operator console converges to exactly what the center knows.
Device, link, and CRDT records are simulator telemetry and are emitted at
the owning node.
"""

from __future__ import annotations

import heapq
import json
import math
import random
import threading
from dataclasses import dataclass, replace

from .command import AlarmError, CityAggregate
from .core import (
    CENTER,
    CityMeshError,
    FRAME_PAYLOAD_BITS,
    GuidanceState,
    Mode,
    NodeId,
    NodeKind,
    SensorFrame,
    SensorKind,
    SimTime,
)
from .crdt import AuthorKey, CrdtState, Message, MsgId, ReplicaStore, encoded_size
from .light import (
    AllClear,
    CrisisAlert,
    CrisisCause,
    DetectionRule,
    EnvironmentTrace,
    GuidanceError,
    LightNode,
    Ramp,
    RuleKind,
    VisionMark,
    evaluate_rules,
    morph,
    next_sample_time,
    sample,
    set_guidance,
)
from .metrics import (
    DELIVERED,
    UNREACHABLE,
    WITHHELD,
    DisseminationRecord,
    MetricsReport,
    RoundTripSample,
    SizeSample,
)
from .network import (
    BandwidthMode,
    Heal,
    Link,
    LinkCut,
    LinkKind,
    LinkProfile,
    Partition,
    ServerDown,
    Topology,
    deliver,
    discover_peers,
    inject_failure,
    pair_manual,
    transmit_time,
)
from .scenario import (
    Action,
    EnvRampAction,
    HealAction,
    IssueAlarmAction,
    LinkCutAction,
    PairDevicesAction,
    PartitionAction,
    PostMessageAction,
    RevokeAlarmAction,
    Scenario,
    ServerDownAction,
    SetGuidanceAction,
    VisionEventAction,
)

COMMAND_BITS = 256
STATUS_BITS = 256
PUSH_BITS = 128
SNAPSHOT_ALERTS = 50


class EngineError(CityMeshError):
    """Scenario asked the engine to do something impossible."""


@dataclass(frozen=True)
class TraceRecord:
    t: SimTime
    kind: str
    data: dict

    def to_json(self) -> str:
        return json.dumps(
            {"t": self.t, "kind": self.kind, **self.data},
            sort_keys=True,
            separators=(",", ":"),
        )


def render_trace(trace: list[TraceRecord]) -> str:
    return "".join(r.to_json() + "\n" for r in trace)


# Internal queue entries -------------------------------------------------


@dataclass(frozen=True)
class _Scripted:
    action: Action


@dataclass(frozen=True)
class _SampleDue:
    light: int


@dataclass(frozen=True)
class _SyncRound:
    pass


@dataclass(frozen=True)
class _FrameArrival:
    frame: SensorFrame
    path: tuple[NodeId, ...]


@dataclass(frozen=True)
class _StatusArrival:
    light: NodeId
    mode: Mode
    guidance: GuidanceState
    alert: CrisisAlert | None = None


@dataclass(frozen=True)
class _CommandArrival:
    light: int
    trigger: CrisisAlert | AllClear


@dataclass(frozen=True)
class _GuidanceArrival:
    light: int
    state: GuidanceState


@dataclass(frozen=True)
class _SyncArrival:
    dst: NodeId
    src: NodeId
    state: CrdtState
    size_bytes: int
    latency_ms: float


@dataclass(frozen=True)
class _PushArrival:
    device: NodeId
    light: NodeId
    cause: CrisisCause


class Engine:
    """Owns all simulation state; single-threaded event loop.

    In serve mode the HTTP layer calls :meth:`submit` and :meth:`snapshot`
    under :attr:`lock`; every mutation still happens on the loop thread.
    """

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.now: SimTime = 0
        self.lock = threading.RLock()
        self.on_record = None  # optional callback for live streaming

        self._heap: list[tuple[SimTime, int, object]] = []
        self._counter = 0
        self.trace: list[TraceRecord] = []
        self.report = MetricsReport()

        self.topology = self._build_topology()
        self.lights: dict[int, LightNode] = self._build_lights()
        self.device_modes: dict[NodeId, Mode] = {
            NodeId(NodeKind.CITIZEN_DEVICE, d.index): Mode.EVERYDAY for d in scenario.devices
        }
        self.keys, trusted = self._build_keys()
        self.replicas: dict[NodeId, ReplicaStore] = {
            node: ReplicaStore(node, self.keys[node], trusted)
            for node in sorted(self.topology.nodes, key=lambda n: n.sort_key)
        }
        self.aggregate = (
            CityAggregate(sorted((n for n in self.topology.nodes
                                  if n.kind is NodeKind.STREET_LIGHT),
                                 key=lambda n: n.sort_key))
            if scenario.has_center
            else None
        )
        self.histories: dict[int, list[SensorFrame]] = {l.index: [] for l in scenario.lights}
        self._rngs = {
            l.index: random.Random(f"{scenario.seed}:light:{l.index}")
            for l in scenario.lights
        }
        self._max_window = max(
            [r.window_ms for node in self.lights.values() for r in node.rules],
            default=60_000,
        )

        # message accounting
        self._post_time: dict[MsgId, SimTime] = {}
        self._origin: dict[MsgId, NodeId] = {}
        self._delivered: dict[tuple[MsgId, NodeId], int] = {}
        self._rt_done: set[MsgId] = set()
        self._started = False
        self._finalized = False

    # --- construction -----------------------------------------------------

    def _build_topology(self) -> Topology:
        s = self.scenario
        nodes = s.node_ids()
        links = []
        for decl in s.links:
            mode = decl.mode
            if mode is None:
                mode = (
                    BandwidthMode.NARROW_8MHZ
                    if decl.kind is LinkKind.COVERT_MESH
                    else BandwidthMode.STANDARD_20MHZ
                )
            distance = decl.distance_m
            if distance is None:
                if decl.kind is LinkKind.CLIENT_SERVER:
                    # an infrastructure uplink, not a radio hop: distance is
                    # nominal unless the scenario says otherwise
                    distance = 1.0
                else:
                    ax, ay = s.position(decl.a)
                    bx, by = s.position(decl.b)
                    distance = max(1.0, math.hypot(ax - bx, ay - by))
            try:
                profile = LinkProfile(mode, distance)
            except ValueError as exc:
                raise EngineError(f"link {decl.a}--{decl.b}: {exc}") from None
            causes = frozenset({"down"}) if decl.down else frozenset()
            links.append(Link(decl.a, decl.b, decl.kind, profile, down_causes=causes))
        return Topology(nodes=frozenset(nodes), links=tuple(links))

    def _build_lights(self) -> dict[int, LightNode]:
        s = self.scenario
        rules = (
            DetectionRule(
                RuleKind.FIRE_RULE,
                particulate_threshold=s.fire_particulate,
                temp_rise_threshold=s.fire_temp_rise,
                window_ms=s.fire_window_ms,
            ),
            DetectionRule(RuleKind.VISION_EVENT),
        )
        lights = {}
        for decl in s.lights:
            base = {}
            noise = {}
            for trace in s.traces:
                if trace.light == decl.index:
                    base[trace.sensor] = trace.base
                    noise[trace.sensor] = trace.noise
            lights[decl.index] = LightNode(
                id=NodeId(NodeKind.STREET_LIGHT, decl.index),
                rules=rules,
                environment=EnvironmentTrace.from_values(base, noise),
            )
        return lights

    def _build_keys(self) -> tuple[dict[NodeId, AuthorKey], list[AuthorKey]]:
        keys: dict[NodeId, AuthorKey] = {}
        for node in sorted(self.topology.nodes, key=lambda n: n.sort_key):
            if node.kind is NodeKind.CITIZEN_DEVICE:
                trusted = any(
                    d.index == node.index and d.trusted for d in self.scenario.devices
                )
            else:
                trusted = True  # infrastructure keys are pre-shared
            keys[node] = AuthorKey.derive(node.label, trusted=trusted)
        trusted_keys = [k for k in keys.values() if k.trusted]
        return keys, trusted_keys

    # --- plumbing ----------------------------------------------------------

    def _schedule(self, t: SimTime, item: object) -> None:
        heapq.heappush(self._heap, (t, self._counter, item))
        self._counter += 1

    def _record(self, kind: str, **data) -> None:
        record = TraceRecord(t=self.now, kind=kind, data=data)
        self.trace.append(record)
        if self.on_record is not None:
            self.on_record(record)

    def _crdt_sample(self, node: NodeId) -> None:
        replica = self.replicas[node]
        self.report.sizes.append(
            SizeSample(
                time=self.now,
                node=node.label,
                messages=replica.message_count,
                size_bytes=replica.size_bytes,
            )
        )
        self._record(
            "crdt",
            node=node.label,
            messages=replica.message_count,
            size_bytes=replica.size_bytes,
        )

    def _apply_topology(self, topo: Topology, reason: str) -> None:
        before = {l.key: l.up for l in self.topology.links}
        self.topology = topo
        for link in topo.links:
            old = before.get(link.key)
            if old is None or old != link.up:
                self._record(
                    "link",
                    a=link.a.label,
                    b=link.b.label,
                    link_kind=link.kind.value,
                    up=link.up,
                    reason=reason,
                )

    def _msg_label(self, mid: MsgId) -> str:
        origin = self._origin.get(mid)
        prefix = origin.label if origin is not None else mid[0][:4].hex()
        return f"{prefix}/{mid[1]}"

    # --- start / main loop --------------------------------------------------

    def _start(self) -> None:
        if self._started:
            return
        self._started = True
        for event in self.scenario.events:
            self._schedule(event.time, _Scripted(event.action))
        for index in sorted(self.lights):
            self._schedule(next_sample_time(self.lights[index]), _SampleDue(index))
        self._schedule(self.scenario.sync_interval_ms, _SyncRound())

    def run(self) -> tuple[MetricsReport, list[TraceRecord]]:
        """Execute the whole scenario headless."""
        with self.lock:
            self._start()
            while self._heap:
                t, _, item = self._heap[0]
                if t > self.scenario.duration_ms:
                    break
                heapq.heappop(self._heap)
                self.now = t
                self._dispatch(item)
            self._finalize()
        return self.report, self.trace

    def next_time(self) -> SimTime | None:
        while self._heap:
            t, _, _ = self._heap[0]
            if t > self.scenario.duration_ms:
                return None
            return t
        return None

    def process_due(self, upto: SimTime) -> None:
        """Process every queued event with time <= upto (serve mode)."""
        while self._heap:
            t, _, item = self._heap[0]
            if t > upto or t > self.scenario.duration_ms:
                break
            heapq.heappop(self._heap)
            self.now = t
            self._dispatch(item)

    def _dispatch(self, item: object) -> None:
        if isinstance(item, _Scripted):
            self._apply_action(item.action)
        elif isinstance(item, _SampleDue):
            self._do_sample(item.light)
        elif isinstance(item, _SyncRound):
            self._do_sync_round()
        elif isinstance(item, _FrameArrival):
            self._frame_at_center(item)
        elif isinstance(item, _StatusArrival):
            self._status_at_center(item)
        elif isinstance(item, _CommandArrival):
            self._command_at_light(item)
        elif isinstance(item, _GuidanceArrival):
            self._guidance_at_light(item)
        elif isinstance(item, _SyncArrival):
            self._sync_at_node(item)
        elif isinstance(item, _PushArrival):
            self._push_at_device(item)
        else:  # pragma: no cover - queue corruption
            raise EngineError(f"unknown queue item {item!r}")

    # --- sampling and detection ---------------------------------------------

    def _do_sample(self, index: int) -> None:
        node = self.lights[index]
        if self.now != next_sample_time(node):
            return  # stale entry from before a mode change
        frame, node = sample(node, self.now, self._rngs[index])
        self.lights[index] = node
        history = self.histories[index]
        history.append(frame)
        cutoff = self.now - 2 * self._max_window
        while history and history[0].time < cutoff:
            history.pop(0)

        self._send_frame(frame)

        alert = evaluate_rules(node, history)
        if alert is not None and node.mode is Mode.EVERYDAY:
            self._record(
                "detected", light=node.id.label, cause=alert.cause.value
            )
            self._morph_light(index, alert)
            self._send_status(node.id, alert=alert)
        self._schedule(next_sample_time(self.lights[index]), _SampleDue(index))

    def _send_frame(self, frame: SensorFrame) -> None:
        if not self.scenario.has_center:
            return
        delivery = deliver(
            self.topology,
            frame.light,
            CENTER,
            FRAME_PAYLOAD_BITS,
            self.now,
            processing_ms=self.scenario.processing_ms,
            anchors=self.scenario.anchors,
        )
        if delivery is None:
            self._record("undeliverable", payload="frame", source=frame.light.label, dest="center")
            return
        self._schedule(delivery.at, _FrameArrival(frame=frame, path=delivery.path))
        self._record(
            "delivery",
            payload="frame",
            source=frame.light.label,
            dest="center",
            bits=delivery.payload_bits,
            latency_ms=round(delivery.latency_ms, 3),
            hops=len(delivery.hops),
        )

    def _send_status(self, light: NodeId, alert: CrisisAlert | None = None) -> None:
        if not self.scenario.has_center:
            return
        node = self.lights[light.index]
        delivery = deliver(
            self.topology,
            light,
            CENTER,
            STATUS_BITS,
            self.now,
            processing_ms=self.scenario.processing_ms,
            anchors=self.scenario.anchors,
        )
        if delivery is None:
            self._record("undeliverable", payload="status", source=light.label, dest="center")
            return
        self._schedule(
            delivery.at,
            _StatusArrival(light=light, mode=node.mode, guidance=node.guidance, alert=alert),
        )

    def _morph_light(self, index: int, trigger: CrisisAlert | AllClear) -> bool:
        node = self.lights[index]
        connected = sorted(
            (
                link.other(node.id)
                for link in self.topology.up_links_of(node.id)
                if link.kind is LinkKind.LIGHT_AP
                and link.other(node.id).kind is NodeKind.CITIZEN_DEVICE
            ),
            key=lambda n: n.sort_key,
        )
        morphed, pushes = morph(node, trigger, connected)
        if morphed.mode is node.mode:
            return False
        self.lights[index] = morphed
        for push in pushes:
            link = self.topology.find_link(node.id, push.device, LinkKind.LIGHT_AP)
            arrival = self._single_hop(link, PUSH_BITS)
            if arrival is None:
                continue
            self._schedule(
                arrival, _PushArrival(device=push.device, light=node.id, cause=push.cause)
            )
        self._schedule(next_sample_time(morphed), _SampleDue(index))
        return True

    def _single_hop(self, link: Link | None, payload_bits: int) -> SimTime | None:
        if link is None or not link.up:
            return None
        seconds = transmit_time(payload_bits, link.profile, self.scenario.anchors)
        if not math.isfinite(seconds):
            return None
        return self.now + math.ceil(seconds * 1000.0 + self.scenario.processing_ms)

    # --- command-center arrivals ---------------------------------------------

    def _frame_at_center(self, item: _FrameArrival) -> None:
        if self.aggregate is None:
            return
        for hop_a, hop_b in zip(item.path, item.path[1:]):
            link_label = f"{min(hop_a, hop_b, key=lambda n: n.sort_key)}--" \
                         f"{max(hop_a, hop_b, key=lambda n: n.sort_key)}"
            self.report.link_frames[link_label] = self.report.link_frames.get(link_label, 0) + 1
        if not self.aggregate.ingest(item.frame):
            return  # stale frame discarded
        light = item.frame.light
        for kind in SensorKind:
            self._record(
                "sensor",
                topic=f"city/light/{light.index}/sensor/{kind.topic_name}",
                light=light.label,
                sensor=kind.topic_name,
                value=item.frame.reading(kind),
                sampled_ms=item.frame.time,
            )

    def _status_at_center(self, item: _StatusArrival) -> None:
        if self.aggregate is None:
            return
        if item.alert is not None:
            self.aggregate.ingest(item.alert)
            self._record(
                "alert",
                source=item.alert.source.label,
                cause=item.alert.cause.value,
                detected_ms=item.alert.time,
            )
        self.aggregate.note_mode(item.light, item.mode)
        self.aggregate.note_guidance(item.light, item.guidance)
        self._record("mode", node=item.light.label, mode=item.mode.value)
        self._record("guidance", light=item.light.label, state=item.guidance.value)

    # --- light-side arrivals ---------------------------------------------------

    def _command_at_light(self, item: _CommandArrival) -> None:
        self._morph_light(item.light, item.trigger)
        self._send_status(NodeId(NodeKind.STREET_LIGHT, item.light))

    def _guidance_at_light(self, item: _GuidanceArrival) -> None:
        node = self.lights[item.light]
        try:
            self.lights[item.light] = set_guidance(node, item.state)
        except GuidanceError as exc:
            self._record(
                "guidance_rejected",
                light=node.id.label,
                state=item.state.value,
                reason=str(exc),
            )
            return
        self._send_status(node.id)

    def _push_at_device(self, item: _PushArrival) -> None:
        self._record(
            "push", device=item.device.label, light=item.light.label, cause=item.cause.value
        )
        if self.device_modes.get(item.device) is not Mode.EMERGENCY:
            self.device_modes[item.device] = Mode.EMERGENCY
            self._record("mode", node=item.device.label, mode=Mode.EMERGENCY.value)

    # --- anti-entropy -----------------------------------------------------------

    def _do_sync_round(self) -> None:
        self._run_discovery()
        for node in sorted(self.replicas, key=lambda n: n.sort_key):
            offer = self.replicas[node].offer()
            if not offer.messages and not offer.version:
                continue
            size = encoded_size(offer)
            links = sorted(
                self.topology.up_links_of(node),
                key=lambda l: (l.a.sort_key, l.b.sort_key, l.kind.value),
            )
            for link in links:
                peer = link.other(node)
                seconds = transmit_time(size * 8, link.profile, self.scenario.anchors)
                if not math.isfinite(seconds):
                    continue
                latency = seconds * 1000.0 + self.scenario.processing_ms
                self._schedule(
                    self.now + math.ceil(latency),
                    _SyncArrival(
                        dst=peer, src=node, state=offer, size_bytes=size, latency_ms=latency
                    ),
                )
        self._schedule(self.now + self.scenario.sync_interval_ms, _SyncRound())

    def _run_discovery(self) -> None:
        """Devices in emergency (or cut off from the server) discover peers
        through shared relays and materialize device-to-device links."""
        for device in sorted(self.device_modes, key=lambda n: n.sort_key):
            has_server = any(
                link.kind is LinkKind.CLIENT_SERVER
                for link in self.topology.up_links_of(device)
            )
            if self.device_modes[device] is not Mode.EMERGENCY and has_server:
                continue
            for peer in sorted(discover_peers(device, self.topology), key=lambda n: n.sort_key):
                existing = self.topology.find_link(device, peer, LinkKind.DEVICE_TO_DEVICE)
                if existing is not None and existing.up:
                    continue
                ax, ay = self.scenario.position(device)
                bx, by = self.scenario.position(peer)
                profile = LinkProfile(
                    BandwidthMode.STANDARD_20MHZ, max(1.0, math.hypot(ax - bx, ay - by))
                )
                topo = self.topology.with_link(
                    Link(device, peer, LinkKind.DEVICE_TO_DEVICE, profile)
                )
                self._apply_topology(topo, reason="discovery")

    def _sync_at_node(self, item: _SyncArrival) -> None:
        replica = self.replicas[item.dst]
        before = replica.state
        fresh = replica.receive(item.state)
        self._record(
            "delivery",
            payload="sync",
            source=item.src.label,
            dest=item.dst.label,
            bits=item.size_bytes * 8,
            latency_ms=round(item.latency_ms, 3),
            messages=len(fresh),
        )
        for m in fresh:
            mid = m.msg_id
            key = (mid, item.dst)
            if mid in self._post_time and key not in self._delivered:
                latency = self.now - self._post_time[mid]
                self._delivered[key] = latency
                self.report.dissemination.append(
                    DisseminationRecord(
                        msg=self._msg_label(mid),
                        replica=item.dst.label,
                        status=DELIVERED,
                        latency_ms=latency,
                    )
                )
            if mid in replica.held:
                self._record(
                    "held", node=item.dst.label, msg=self._msg_label(mid)
                )
        # version-map growth changes the encoded size even with no new
        # messages, so telemetry keys off any state change
        if replica.state != before:
            self._crdt_sample(item.dst)

        if self.scenario.probe is not None and item.src == self.scenario.probe:
            for mid in item.state.messages:
                if (
                    mid not in self._rt_done
                    and self._origin.get(mid) not in (None, self.scenario.probe)
                    and (mid, self.scenario.probe) in self._delivered
                ):
                    self._rt_done.add(mid)
                    rt = self.now - self._post_time[mid]
                    self.report.round_trips.append(
                        RoundTripSample(msg=self._msg_label(mid), rt_ms=rt)
                    )
                    self._record("round_trip", msg=self._msg_label(mid), rt_ms=rt)

        if (
            self.report.heal_time_ms is not None
            and self.report.convergence_ms is None
            and self._replicas_equal()
        ):
            self.report.convergence_ms = self.now
            self._record(
                "converged", since_heal_ms=self.now - self.report.heal_time_ms
            )

    def _replicas_equal(self) -> bool:
        states = iter(self.replicas.values())
        first = next(states).state
        return all(r.state == first for r in states)

    # --- scripted actions ---------------------------------------------------------

    def _apply_action(self, action: Action) -> None:
        if isinstance(action, VisionEventAction):
            index = action.light.index
            hold = action.hold_ms if action.hold_ms is not None else self.scenario.vision_hold_ms
            node = self.lights[index]
            env = node.environment.with_vision(VisionMark(start=self.now, duration_ms=hold))
            self.lights[index] = replace(node, environment=env)
            self._record("vision", light=action.light.label, hold_ms=hold)
        elif isinstance(action, EnvRampAction):
            index = action.light.index
            node = self.lights[index]
            env = node.environment.with_ramp(
                Ramp(
                    sensor=action.sensor,
                    start=self.now,
                    duration_ms=action.duration_ms,
                    target=action.target,
                )
            )
            self.lights[index] = replace(node, environment=env)
            self._record(
                "ramp",
                light=action.light.label,
                sensor=action.sensor.topic_name,
                target=action.target,
                duration_ms=action.duration_ms,
            )
        elif isinstance(action, ServerDownAction):
            self._record("failure", failure="server-down")
            self._apply_topology(inject_failure(self.topology, ServerDown()), "server-down")
        elif isinstance(action, LinkCutAction):
            self._record(
                "failure",
                failure="cut",
                a=action.a.label,
                b=action.b.label,
                link_kind=action.kind.value,
            )
            self._apply_topology(
                inject_failure(self.topology, LinkCut(action.a, action.b, action.kind)), "cut"
            )
        elif isinstance(action, PartitionAction):
            side = sorted(n.label for n in action.side)
            self._record("failure", failure="partition", side=side)
            self._apply_topology(
                inject_failure(self.topology, Partition(action.side)), "partition"
            )
        elif isinstance(action, HealAction):
            self._record("failure", failure="heal")
            self._apply_topology(inject_failure(self.topology, Heal()), "heal")
            self.report.heal_time_ms = self.now
            self.report.convergence_ms = None
        elif isinstance(action, IssueAlarmAction):
            self._issue_alarm(action.region, action.cause)
        elif isinstance(action, RevokeAlarmAction):
            self._revoke_alarm(action.region)
        elif isinstance(action, PairDevicesAction):
            token = f"pair:{min(action.a, action.b, key=lambda n: n.sort_key)}".encode()
            ax, ay = self.scenario.position(action.a)
            bx, by = self.scenario.position(action.b)
            profile = LinkProfile(
                BandwidthMode.STANDARD_20MHZ, max(1.0, math.hypot(ax - bx, ay - by))
            )
            topo = pair_manual(
                self.topology, action.a, action.b, token, token, profile=profile
            )
            self._record("pair", a=action.a.label, b=action.b.label)
            self._apply_topology(topo, reason="pair")
        elif isinstance(action, PostMessageAction):
            replica = self.replicas[action.device]
            m = replica.post(action.body, self.now, signature_valid=action.signature_valid)
            self._note_post(action.device, m)
        elif isinstance(action, SetGuidanceAction):
            self._set_guidance(action.light, action.state)
        else:  # pragma: no cover
            raise EngineError(f"unknown scripted action {action!r}")

    def _issue_alarm(self, region: frozenset[NodeId], cause: CrisisCause) -> None:
        if self.aggregate is None:
            raise EngineError("alarms need a command center in the scenario")
        commands = self.aggregate.issue_alarm(region, cause, self.now)
        self._record(
            "alarm",
            region=sorted(n.label for n in region),
            cause=cause.value,
        )
        body = "ALARM {} {}".format(cause.value, " ".join(sorted(n.label for n in region)))
        message = self.replicas[CENTER].post(body.encode(), self.now)
        self._note_post(CENTER, message)
        for command in commands:
            self._dispatch_command(command.light, command.trigger)

    def _revoke_alarm(self, region: frozenset[NodeId]) -> None:
        if self.aggregate is None:
            raise EngineError("alarms need a command center in the scenario")
        commands = self.aggregate.revoke_alarm(region, self.now)
        self._record("revoke", region=sorted(n.label for n in region))
        for command in commands:
            self._dispatch_command(command.light, command.trigger)

    def _dispatch_command(self, light: NodeId, trigger: CrisisAlert | AllClear) -> None:
        delivery = deliver(
            self.topology,
            CENTER,
            light,
            COMMAND_BITS,
            self.now,
            processing_ms=self.scenario.processing_ms,
            anchors=self.scenario.anchors,
        )
        if delivery is None:
            self._record(
                "undeliverable", payload="command", source="center", dest=light.label
            )
            return
        self._schedule(delivery.at, _CommandArrival(light=light.index, trigger=trigger))
        self._record(
            "delivery",
            payload="command",
            source="center",
            dest=light.label,
            bits=COMMAND_BITS,
            latency_ms=round(delivery.latency_ms, 3),
            hops=len(delivery.hops),
        )

    def _set_guidance(self, light: NodeId, state: GuidanceState) -> None:
        if self.aggregate is None:
            raise EngineError("guidance commands need a command center in the scenario")
        delivery = deliver(
            self.topology,
            CENTER,
            light,
            COMMAND_BITS,
            self.now,
            processing_ms=self.scenario.processing_ms,
            anchors=self.scenario.anchors,
        )
        if delivery is None:
            self._record(
                "undeliverable", payload="guidance", source="center", dest=light.label
            )
            return
        self._schedule(delivery.at, _GuidanceArrival(light=light.index, state=state))

    def _note_post(self, node: NodeId, m: Message) -> None:
        mid = m.msg_id
        self._post_time[mid] = self.now
        self._origin[mid] = node
        self._delivered[(mid, node)] = 0
        self.report.dissemination.append(
            DisseminationRecord(
                msg=self._msg_label(mid), replica=node.label, status=DELIVERED, latency_ms=0
            )
        )
        self._record(
            "post",
            node=node.label,
            msg=self._msg_label(mid),
            author=m.author[:4].hex(),
            seq=m.seq,
            bytes=len(m.body),
        )
        self._crdt_sample(node)

    # --- external commands (serve mode) -----------------------------------------

    def submit(self, action: Action) -> SimTime:
        """Validate an operator action and enqueue it; raises CityMeshError
        subclasses when the action is invalid right now."""
        with self.lock:
            self._validate_external(action)
            at = self.now + 1
            self._schedule(at, _Scripted(action))
            return at

    def _validate_external(self, action: Action) -> None:
        declared = self.topology.nodes
        if isinstance(action, IssueAlarmAction):
            if self.aggregate is None:
                raise AlarmError("scenario has no command center")
            if not action.region:
                raise AlarmError("alarm region is empty")
            unknown = {n for n in action.region if n not in self.aggregate.lights}
            if unknown:
                raise AlarmError(
                    f"alarm region has undeclared lights: {sorted(map(str, unknown))}"
                )
        elif isinstance(action, RevokeAlarmAction):
            if self.aggregate is None:
                raise AlarmError("scenario has no command center")
            covered = set()
            for alarm in self.aggregate.alarms:
                covered |= alarm.region
            uncovered = action.region - covered
            if not action.region or uncovered:
                raise AlarmError(
                    f"no active alarm covers: {sorted(map(str, uncovered or {'(empty)'}))}"
                )
        elif isinstance(action, SetGuidanceAction):
            if action.light not in declared:
                raise EngineError(f"unknown light {action.light}")
            node = self.lights[action.light.index]
            if not action.state.allowed_in(node.mode):
                raise GuidanceError(
                    f"guidance {action.state.value} not permitted in {node.mode.value} mode"
                )
        elif isinstance(action, PairDevicesAction):
            for n in (action.a, action.b):
                if n not in declared or n.kind is not NodeKind.CITIZEN_DEVICE:
                    raise EngineError(f"{n} is not a declared citizen device")
        elif isinstance(action, LinkCutAction):
            if self.topology.find_link(action.a, action.b, action.kind) is None:
                raise EngineError(
                    f"no {action.kind.value} link between {action.a} and {action.b}"
                )
        elif isinstance(action, PartitionAction):
            unknown = action.side - declared
            if unknown:
                raise EngineError(f"unknown nodes: {sorted(map(str, unknown))}")
        elif isinstance(action, PostMessageAction):
            if action.device not in declared:
                raise EngineError(f"unknown device {action.device}")

    # --- finalization -------------------------------------------------------------

    def _finalize(self) -> None:
        if self._finalized:
            return
        self._finalized = True
        self.now = self.scenario.duration_ms
        held_anywhere: set[MsgId] = set()
        for replica in self.replicas.values():
            held_anywhere |= replica.held | replica.denied
        for mid in self._post_time:
            for node in sorted(self.replicas, key=lambda n: n.sort_key):
                if (mid, node) in self._delivered:
                    continue
                status = WITHHELD if mid in held_anywhere else UNREACHABLE
                self.report.dissemination.append(
                    DisseminationRecord(
                        msg=self._msg_label(mid), replica=node.label, status=status
                    )
                )
        self._record("run_complete", duration_ms=self.scenario.duration_ms)

    # --- snapshot -------------------------------------------------------------------

    def snapshot(self) -> dict:
        """Composite console view: the command center's city view plus
        simulator telemetry (replica sizes, device modes, link states)."""
        with self.lock:
            lights = []
            if self.aggregate is not None:
                entries = {e["id"]: e for e in self.aggregate.snapshot_lights()}
            else:
                entries = {}
            for index in sorted(self.lights):
                node = self.lights[index]
                label = node.id.label
                entry = entries.get(label) or {
                    "id": label,
                    "mode": node.mode.value,
                    "guidance": node.guidance.value,
                    "readings": None,
                    "last_frame_ms": None,
                }
                x, y = self.scenario.position(node.id)
                replica = self.replicas[node.id]
                entry.update(
                    x=x,
                    y=y,
                    messages=replica.message_count,
                    size_bytes=replica.size_bytes,
                )
                lights.append(entry)

            devices = []
            for device in sorted(self.device_modes, key=lambda n: n.sort_key):
                x, y = self.scenario.position(device)
                replica = self.replicas[device]
                devices.append(
                    {
                        "id": device.label,
                        "x": x,
                        "y": y,
                        "emergency": self.device_modes[device] is Mode.EMERGENCY,
                        "messages": replica.message_count,
                        "size_bytes": replica.size_bytes,
                    }
                )

            center = None
            if self.scenario.has_center:
                replica = self.replicas[CENTER]
                center = {
                    "x": self.scenario.center_x,
                    "y": self.scenario.center_y,
                    "messages": replica.message_count,
                    "size_bytes": replica.size_bytes,
                }

            links = [
                {
                    "a": link.a.label,
                    "b": link.b.label,
                    "kind": link.kind.value,
                    "up": link.up,
                }
                for link in self.topology.links
            ]

            alarms = []
            alerts = []
            if self.aggregate is not None:
                for alarm in sorted(
                    self.aggregate.alarms, key=lambda a: (a.issued, a.cause.value)
                ):
                    alarms.append(
                        {
                            "region": sorted(n.label for n in alarm.region),
                            "issued_ms": alarm.issued,
                            "cause": alarm.cause.value,
                        }
                    )
                for alert in self.aggregate.alert_log[-SNAPSHOT_ALERTS:]:
                    alerts.append(
                        {
                            "time_ms": alert.time,
                            "source": alert.source.label,
                            "cause": alert.cause.value,
                        }
                    )

            return {
                "time_ms": self.now,
                "lights": lights,
                "devices": devices,
                "center": center,
                "links": links,
                "alarms": alarms,
                "alerts": alerts,
            }


def snapshot_json(snapshot: dict) -> str:
    return json.dumps(snapshot, sort_keys=True, separators=(",", ":"))


def run_scenario(scenario: Scenario) -> tuple[MetricsReport, list[TraceRecord]]:
    return Engine(scenario).run()
