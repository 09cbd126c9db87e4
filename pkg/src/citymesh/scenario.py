"""Scenario files: a line-oriented text format with explicit sections,
chosen so a scenario corpus diffs cleanly.

    # comment
    [scenario]
    seed = 42
    duration = 600s

    [nodes]
    light 0 at 0,0
    device 0 at 2,1 trusted
    center at 20,5

    [topology]
    link light:0 light:1 mesh
    link device:0 center server down

    [traces]
    light:3 co2 base 400 noise 5

    [events]
    40s ramp light:3 co2 to 2000 over 20s
    60s alarm light:0 light:1 cause operator

Times accept ``ms``/``s``/``m`` suffixes (bare integers are milliseconds).
Events must be listed in time order. ``parse_scenario`` round-trips with
``serialize_scenario``.
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass

from .core import CityMeshError, GuidanceState, NodeId, NodeKind, SensorKind, SimTime
from .light import CrisisCause
from .network import DEFAULT_ANCHORS, BandwidthMode, LinkKind


class ScenarioParseError(CityMeshError):
    """Parse or validation failure, pointing at the offending line."""

    def __init__(self, line_no: int | None, message: str):
        self.line_no = line_no
        prefix = f"line {line_no}: " if line_no is not None else ""
        super().__init__(prefix + message)


# --- declarations -----------------------------------------------------------


@dataclass(frozen=True)
class LightDecl:
    index: int
    x: float = 0.0
    y: float = 0.0


@dataclass(frozen=True)
class DeviceDecl:
    index: int
    x: float = 0.0
    y: float = 0.0
    trusted: bool = False


@dataclass(frozen=True)
class LinkDecl:
    a: NodeId
    b: NodeId
    kind: LinkKind
    mode: BandwidthMode | None = None  # None: default for the link kind
    distance_m: float | None = None  # None: derived from node positions
    down: bool = False


@dataclass(frozen=True)
class TraceDecl:
    light: int
    sensor: SensorKind
    base: float = 0.0
    noise: float = 0.0


# --- scripted actions -------------------------------------------------------


@dataclass(frozen=True)
class VisionEventAction:
    light: NodeId
    hold_ms: int | None = None  # None: scenario default


@dataclass(frozen=True)
class EnvRampAction:
    light: NodeId
    sensor: SensorKind
    target: float
    duration_ms: int


@dataclass(frozen=True)
class ServerDownAction:
    pass


@dataclass(frozen=True)
class LinkCutAction:
    a: NodeId
    b: NodeId
    kind: LinkKind


@dataclass(frozen=True)
class PartitionAction:
    side: frozenset[NodeId]


@dataclass(frozen=True)
class HealAction:
    pass


@dataclass(frozen=True)
class IssueAlarmAction:
    region: frozenset[NodeId]
    cause: CrisisCause = CrisisCause.OPERATOR_ALARM


@dataclass(frozen=True)
class RevokeAlarmAction:
    region: frozenset[NodeId]


@dataclass(frozen=True)
class PairDevicesAction:
    a: NodeId
    b: NodeId


@dataclass(frozen=True)
class PostMessageAction:
    device: NodeId
    body: bytes
    signature_valid: bool = True


@dataclass(frozen=True)
class SetGuidanceAction:
    light: NodeId
    state: GuidanceState


Action = (
    VisionEventAction
    | EnvRampAction
    | ServerDownAction
    | LinkCutAction
    | PartitionAction
    | HealAction
    | IssueAlarmAction
    | RevokeAlarmAction
    | PairDevicesAction
    | PostMessageAction
    | SetGuidanceAction
)


@dataclass(frozen=True)
class ScenarioEvent:
    time: SimTime
    action: Action


@dataclass(frozen=True)
class Scenario:
    seed: int = 0
    duration_ms: SimTime = 60_000
    sync_interval_ms: int = 1_000
    processing_ms: float = 5.0
    anchors: tuple[tuple[float, float], ...] = DEFAULT_ANCHORS
    vision_hold_ms: int = 30_000
    probe: NodeId | None = None
    fire_particulate: float = 1000.0
    fire_temp_rise: float = 10.0
    fire_window_ms: int = 60_000
    lights: tuple[LightDecl, ...] = ()
    devices: tuple[DeviceDecl, ...] = ()
    has_center: bool = False
    center_x: float = 0.0
    center_y: float = 0.0
    links: tuple[LinkDecl, ...] = ()
    traces: tuple[TraceDecl, ...] = ()
    events: tuple[ScenarioEvent, ...] = ()

    def node_ids(self) -> frozenset[NodeId]:
        ids = {NodeId(NodeKind.STREET_LIGHT, l.index) for l in self.lights}
        ids |= {NodeId(NodeKind.CITIZEN_DEVICE, d.index) for d in self.devices}
        if self.has_center:
            ids.add(NodeId(NodeKind.COMMAND_CENTER, 0))
        return frozenset(ids)

    def position(self, node: NodeId) -> tuple[float, float]:
        if node.kind is NodeKind.STREET_LIGHT:
            for l in self.lights:
                if l.index == node.index:
                    return (l.x, l.y)
        elif node.kind is NodeKind.CITIZEN_DEVICE:
            for d in self.devices:
                if d.index == node.index:
                    return (d.x, d.y)
        elif self.has_center:
            return (self.center_x, self.center_y)
        raise KeyError(node)


# --- parsing ----------------------------------------------------------------

_TIME_UNITS = {"ms": 1, "s": 1000, "m": 60_000}


def parse_duration(text: str, line_no: int | None = None) -> int:
    text = text.strip()
    for suffix, factor in _TIME_UNITS.items():
        if text.endswith(suffix) and text[: -len(suffix)].strip("-").isdigit():
            value = int(text[: -len(suffix)]) * factor
            break
    else:
        if text.strip("-").isdigit():
            value = int(text)
        else:
            raise ScenarioParseError(line_no, f"malformed duration {text!r}")
    if value < 0:
        raise ScenarioParseError(line_no, f"negative duration {text!r}")
    return value


def format_duration(ms: int) -> str:
    if ms % 60_000 == 0 and ms:
        return f"{ms // 60_000}m"
    if ms % 1000 == 0 and ms:
        return f"{ms // 1000}s"
    return f"{ms}ms"


def _parse_node(text: str, line_no: int) -> NodeId:
    try:
        return NodeId.parse(text)
    except ValueError as exc:
        raise ScenarioParseError(line_no, str(exc)) from None


def _parse_float(text: str, line_no: int, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ScenarioParseError(line_no, f"malformed {what} {text!r}") from None


def _parse_sensor(text: str, line_no: int) -> SensorKind:
    try:
        return SensorKind.from_topic_name(text)
    except ValueError as exc:
        raise ScenarioParseError(line_no, str(exc)) from None


_LINK_KINDS = {k.value: k for k in LinkKind}
_BANDWIDTH_MODES = {m.value: m for m in BandwidthMode}
_GUIDANCE = {g.value: g for g in GuidanceState}
_CAUSES = {c.value: c for c in CrisisCause}


class _Parser:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.header: dict[str, tuple[str, int]] = {}
        self.lights: list[LightDecl] = []
        self.devices: list[DeviceDecl] = []
        self.has_center = False
        self.center_pos = (0.0, 0.0)
        self.links: list[tuple[int, LinkDecl]] = []
        self.traces: list[TraceDecl] = []
        self.events: list[tuple[int, ScenarioEvent]] = []

    def run(self) -> Scenario:
        section = None
        for idx, raw in enumerate(self.lines, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip().lower()
                if section not in ("scenario", "nodes", "topology", "traces", "events"):
                    raise ScenarioParseError(idx, f"unknown section [{section}]")
                continue
            if section is None:
                raise ScenarioParseError(idx, "content before the first section header")
            getattr(self, f"_line_{section}")(line, idx)
        return self._build()

    def _line_scenario(self, line: str, line_no: int) -> None:
        key, sep, value = line.partition("=")
        if not sep:
            raise ScenarioParseError(line_no, f"expected key = value, got {line!r}")
        self.header[key.strip().lower()] = (value.strip(), line_no)

    def _line_nodes(self, line: str, line_no: int) -> None:
        parts = line.split()
        kind = parts[0].lower()
        rest = parts[1:]
        if kind == "center":
            if self.has_center:
                raise ScenarioParseError(line_no, "duplicate center declaration")
            self.has_center = True
            self.center_pos = self._take_position(rest, line_no)
            if rest:
                raise ScenarioParseError(line_no, f"unexpected tokens {rest!r}")
            return
        if kind not in ("light", "device"):
            raise ScenarioParseError(line_no, f"unknown node kind {kind!r}")
        if not rest or not rest[0].isdigit():
            raise ScenarioParseError(line_no, f"{kind} declaration needs an index")
        index = int(rest.pop(0))
        x, y = self._take_position(rest, line_no)
        if kind == "light":
            if any(l.index == index for l in self.lights):
                raise ScenarioParseError(line_no, f"duplicate light {index}")
            self.lights.append(LightDecl(index=index, x=x, y=y))
        else:
            trusted = False
            if rest and rest[0].lower() == "trusted":
                trusted = True
                rest.pop(0)
            if any(d.index == index for d in self.devices):
                raise ScenarioParseError(line_no, f"duplicate device {index}")
            self.devices.append(DeviceDecl(index=index, x=x, y=y, trusted=trusted))
        if rest:
            raise ScenarioParseError(line_no, f"unexpected tokens {rest!r}")

    def _take_position(self, rest: list[str], line_no: int) -> tuple[float, float]:
        if len(rest) >= 2 and rest[0].lower() == "at":
            rest.pop(0)
            coords = rest.pop(0).split(",")
            if len(coords) != 2:
                raise ScenarioParseError(line_no, "position must be x,y")
            return (
                _parse_float(coords[0], line_no, "x coordinate"),
                _parse_float(coords[1], line_no, "y coordinate"),
            )
        return (0.0, 0.0)

    def _line_topology(self, line: str, line_no: int) -> None:
        parts = line.split()
        if parts[0].lower() != "link" or len(parts) < 4:
            raise ScenarioParseError(line_no, "expected: link <node> <node> <kind> [options]")
        a = _parse_node(parts[1], line_no)
        b = _parse_node(parts[2], line_no)
        kind = _LINK_KINDS.get(parts[3].lower())
        if kind is None:
            raise ScenarioParseError(
                line_no, f"unknown link kind {parts[3]!r}, expected one of {sorted(_LINK_KINDS)}"
            )
        mode = None
        distance = None
        down = False
        for token in parts[4:]:
            if token.lower() == "down":
                down = True
            elif token.startswith("mode="):
                mode = _BANDWIDTH_MODES.get(token[5:])
                if mode is None:
                    raise ScenarioParseError(line_no, f"unknown bandwidth mode {token[5:]!r}")
            elif token.startswith("distance="):
                distance = _parse_float(token[9:], line_no, "distance")
            else:
                raise ScenarioParseError(line_no, f"unknown link option {token!r}")
        self.links.append(
            (line_no, LinkDecl(a=a, b=b, kind=kind, mode=mode, distance_m=distance, down=down))
        )

    def _line_traces(self, line: str, line_no: int) -> None:
        parts = line.split()
        if len(parts) < 4:
            raise ScenarioParseError(
                line_no, "expected: <light> <sensor> base <value> [noise <amp>]"
            )
        node = _parse_node(parts[0], line_no)
        if node.kind is not NodeKind.STREET_LIGHT:
            raise ScenarioParseError(line_no, f"traces belong to lights, got {node}")
        sensor = _parse_sensor(parts[1], line_no)
        base = 0.0
        noise = 0.0
        rest = parts[2:]
        while rest:
            word = rest.pop(0).lower()
            if word == "base" and rest:
                base = _parse_float(rest.pop(0), line_no, "base value")
            elif word == "noise" and rest:
                noise = _parse_float(rest.pop(0), line_no, "noise amplitude")
            else:
                raise ScenarioParseError(line_no, f"unexpected trace token {word!r}")
        self.traces.append(TraceDecl(light=node.index, sensor=sensor, base=base, noise=noise))

    def _line_events(self, line: str, line_no: int) -> None:
        try:
            parts = shlex.split(line, comments=False, posix=True)
        except ValueError as exc:
            raise ScenarioParseError(line_no, f"malformed event line: {exc}") from None
        if len(parts) < 2:
            raise ScenarioParseError(line_no, "expected: <time> <action> ...")
        time = parse_duration(parts[0], line_no)
        action = self._parse_action(parts[1].lower(), parts[2:], line_no)
        self.events.append((line_no, ScenarioEvent(time=time, action=action)))

    def _parse_action(self, verb: str, args: list[str], line_no: int) -> Action:
        if verb == "vision":
            if not args:
                raise ScenarioParseError(line_no, "vision needs a light")
            light = _parse_node(args[0], line_no)
            hold = None
            if len(args) >= 3 and args[1].lower() == "for":
                hold = parse_duration(args[2], line_no)
            elif len(args) > 1:
                raise ScenarioParseError(line_no, f"unexpected vision tokens {args[1:]!r}")
            return VisionEventAction(light=light, hold_ms=hold)
        if verb == "ramp":
            # ramp <light> <sensor> to <target> over <duration>
            if len(args) != 6 or args[2].lower() != "to" or args[4].lower() != "over":
                raise ScenarioParseError(
                    line_no, "expected: ramp <light> <sensor> to <target> over <duration>"
                )
            return EnvRampAction(
                light=_parse_node(args[0], line_no),
                sensor=_parse_sensor(args[1], line_no),
                target=_parse_float(args[3], line_no, "ramp target"),
                duration_ms=parse_duration(args[5], line_no),
            )
        if verb == "server-down":
            return ServerDownAction()
        if verb == "cut":
            if len(args) != 3:
                raise ScenarioParseError(line_no, "expected: cut <node> <node> <kind>")
            kind = _LINK_KINDS.get(args[2].lower())
            if kind is None:
                raise ScenarioParseError(line_no, f"unknown link kind {args[2]!r}")
            return LinkCutAction(
                a=_parse_node(args[0], line_no), b=_parse_node(args[1], line_no), kind=kind
            )
        if verb == "partition":
            if not args:
                raise ScenarioParseError(line_no, "partition needs at least one node")
            return PartitionAction(
                side=frozenset(_parse_node(a, line_no) for a in args)
            )
        if verb == "heal":
            return HealAction()
        if verb == "alarm":
            region, cause = self._split_region_cause(args, line_no)
            return IssueAlarmAction(region=region, cause=cause)
        if verb == "revoke":
            if not args:
                raise ScenarioParseError(line_no, "revoke needs at least one light")
            return RevokeAlarmAction(
                region=frozenset(_parse_node(a, line_no) for a in args)
            )
        if verb == "pair":
            if len(args) != 2:
                raise ScenarioParseError(line_no, "expected: pair <device> <device>")
            return PairDevicesAction(
                a=_parse_node(args[0], line_no), b=_parse_node(args[1], line_no)
            )
        if verb == "post":
            if len(args) < 2:
                raise ScenarioParseError(line_no, 'expected: post <device> "body" [unsigned]')
            unsigned = False
            if args[-1].lower() == "unsigned":
                unsigned = True
                args = args[:-1]
            if len(args) != 2:
                raise ScenarioParseError(line_no, 'expected: post <device> "body" [unsigned]')
            return PostMessageAction(
                device=_parse_node(args[0], line_no),
                body=args[1].encode(),
                signature_valid=not unsigned,
            )
        if verb == "guidance":
            if len(args) != 2:
                raise ScenarioParseError(line_no, "expected: guidance <light> <state>")
            state = _GUIDANCE.get(args[1].lower())
            if state is None:
                raise ScenarioParseError(
                    line_no, f"unknown guidance state {args[1]!r}, expected one of {sorted(_GUIDANCE)}"
                )
            return SetGuidanceAction(light=_parse_node(args[0], line_no), state=state)
        raise ScenarioParseError(line_no, f"unknown action {verb!r}")

    def _split_region_cause(
        self, args: list[str], line_no: int
    ) -> tuple[frozenset[NodeId], CrisisCause]:
        cause = CrisisCause.OPERATOR_ALARM
        if "cause" in [a.lower() for a in args]:
            pos = [a.lower() for a in args].index("cause")
            if pos != len(args) - 2:
                raise ScenarioParseError(line_no, "cause must be the final option")
            cause_name = args[pos + 1].lower()
            if cause_name not in _CAUSES:
                raise ScenarioParseError(line_no, f"unknown cause {cause_name!r}")
            cause = _CAUSES[cause_name]
            args = args[:pos]
        if not args:
            raise ScenarioParseError(line_no, "alarm needs at least one light")
        return frozenset(_parse_node(a, line_no) for a in args), cause

    def _build(self) -> Scenario:
        kwargs: dict = {}
        handlers = {
            "seed": lambda v, n: int(v),
            "duration": parse_duration,
            "sync-interval": parse_duration,
            "processing": parse_duration,
            "vision-hold": parse_duration,
            "fire-particulate": lambda v, n: _parse_float(v, n, "fire-particulate"),
            "fire-temp-rise": lambda v, n: _parse_float(v, n, "fire-temp-rise"),
            "fire-window": parse_duration,
        }
        names = {
            "duration": "duration_ms",
            "sync-interval": "sync_interval_ms",
            "processing": "processing_ms",
            "vision-hold": "vision_hold_ms",
            "fire-particulate": "fire_particulate",
            "fire-temp-rise": "fire_temp_rise",
            "fire-window": "fire_window_ms",
        }
        for key, (value, line_no) in self.header.items():
            if key == "anchors":
                kwargs["anchors"] = self._parse_anchors(value, line_no)
            elif key == "probe":
                kwargs["probe"] = _parse_node(value, line_no)
            elif key in handlers:
                try:
                    parsed = handlers[key](value, line_no)
                except ValueError:
                    raise ScenarioParseError(line_no, f"malformed value for {key}") from None
                kwargs[names.get(key, key)] = (
                    float(parsed) if key == "processing" else parsed
                )
            else:
                raise ScenarioParseError(line_no, f"unknown scenario key {key!r}")

        scenario = Scenario(
            lights=tuple(sorted(self.lights, key=lambda l: l.index)),
            devices=tuple(sorted(self.devices, key=lambda d: d.index)),
            has_center=self.has_center,
            center_x=self.center_pos[0],
            center_y=self.center_pos[1],
            links=tuple(decl for _, decl in self.links),
            traces=tuple(self.traces),
            events=tuple(ev for _, ev in self.events),
            **kwargs,
        )
        self._validate(scenario)
        return scenario

    def _parse_anchors(self, value: str, line_no: int) -> tuple[tuple[float, float], ...]:
        anchors = []
        for token in value.split():
            d, sep, kbps = token.partition(":")
            if not sep:
                raise ScenarioParseError(line_no, f"anchor {token!r} must be distance:kbps")
            anchors.append(
                (_parse_float(d, line_no, "anchor distance"), _parse_float(kbps, line_no, "anchor rate"))
            )
        if not anchors or anchors != sorted(anchors):
            raise ScenarioParseError(line_no, "anchors must be non-empty and sorted by distance")
        return tuple(anchors)

    def _validate(self, scenario: Scenario) -> None:
        declared = scenario.node_ids()

        def check(node: NodeId, line_no: int) -> None:
            if node not in declared:
                raise ScenarioParseError(line_no, f"undeclared node {node}")

        for line_no, decl in self.links:
            check(decl.a, line_no)
            check(decl.b, line_no)
        light_indices = {l.index for l in scenario.lights}
        for trace in scenario.traces:
            if trace.light not in light_indices:
                raise ScenarioParseError(None, f"trace for undeclared light:{trace.light}")
        if scenario.probe is not None and scenario.probe not in declared:
            raise ScenarioParseError(None, f"probe node {scenario.probe} not declared")

        last_time = -1
        for (line_no, event) in self.events:
            if event.time < last_time:
                raise ScenarioParseError(
                    line_no, f"events out of order: {event.time} ms after {last_time} ms"
                )
            last_time = event.time
            for node in _action_nodes(event.action):
                check(node, line_no)

def _action_nodes(action: Action) -> tuple[NodeId, ...]:
    if isinstance(action, (VisionEventAction, EnvRampAction)):
        return (action.light,)
    if isinstance(action, LinkCutAction):
        return (action.a, action.b)
    if isinstance(action, PartitionAction):
        return tuple(action.side)
    if isinstance(action, (IssueAlarmAction, RevokeAlarmAction)):
        return tuple(action.region)
    if isinstance(action, PairDevicesAction):
        return (action.a, action.b)
    if isinstance(action, PostMessageAction):
        return (action.device,)
    if isinstance(action, SetGuidanceAction):
        return (action.light,)
    return ()


def parse_scenario(text: str) -> Scenario:
    return _Parser(text).run()


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


# --- serialization ----------------------------------------------------------


def serialize_scenario(s: Scenario) -> str:
    out: list[str] = ["[scenario]"]
    out.append(f"seed = {s.seed}")
    out.append(f"duration = {format_duration(s.duration_ms)}")
    out.append(f"sync-interval = {format_duration(s.sync_interval_ms)}")
    out.append(f"processing = {format_duration(int(s.processing_ms))}")
    out.append("anchors = " + " ".join(f"{d:g}:{v:g}" for d, v in s.anchors))
    out.append(f"vision-hold = {format_duration(s.vision_hold_ms)}")
    if s.probe is not None:
        out.append(f"probe = {s.probe}")
    out.append(f"fire-particulate = {s.fire_particulate:g}")
    out.append(f"fire-temp-rise = {s.fire_temp_rise:g}")
    out.append(f"fire-window = {format_duration(s.fire_window_ms)}")

    out.append("")
    out.append("[nodes]")
    for l in s.lights:
        out.append(f"light {l.index} at {l.x:g},{l.y:g}")
    for d in s.devices:
        line = f"device {d.index} at {d.x:g},{d.y:g}"
        if d.trusted:
            line += " trusted"
        out.append(line)
    if s.has_center:
        out.append(f"center at {s.center_x:g},{s.center_y:g}")

    if s.links:
        out.append("")
        out.append("[topology]")
        for link in s.links:
            line = f"link {link.a} {link.b} {link.kind.value}"
            if link.mode is not None:
                line += f" mode={link.mode.value}"
            if link.distance_m is not None:
                line += f" distance={link.distance_m:g}"
            if link.down:
                line += " down"
            out.append(line)

    if s.traces:
        out.append("")
        out.append("[traces]")
        for t in s.traces:
            line = f"light:{t.light} {t.sensor.topic_name} base {t.base:g}"
            if t.noise:
                line += f" noise {t.noise:g}"
            out.append(line)

    if s.events:
        out.append("")
        out.append("[events]")
        for ev in s.events:
            out.append(f"{format_duration(ev.time)} {_format_action(ev.action)}")
    out.append("")
    return "\n".join(out)


def _quote(body: bytes) -> str:
    text = body.decode(errors="replace")
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _format_action(action: Action) -> str:
    if isinstance(action, VisionEventAction):
        base = f"vision {action.light}"
        if action.hold_ms is not None:
            base += f" for {format_duration(action.hold_ms)}"
        return base
    if isinstance(action, EnvRampAction):
        return (
            f"ramp {action.light} {action.sensor.topic_name} "
            f"to {action.target:g} over {format_duration(action.duration_ms)}"
        )
    if isinstance(action, ServerDownAction):
        return "server-down"
    if isinstance(action, LinkCutAction):
        return f"cut {action.a} {action.b} {action.kind.value}"
    if isinstance(action, PartitionAction):
        nodes = " ".join(str(n) for n in sorted(action.side, key=lambda n: n.sort_key))
        return f"partition {nodes}"
    if isinstance(action, HealAction):
        return "heal"
    if isinstance(action, IssueAlarmAction):
        region = " ".join(str(n) for n in sorted(action.region, key=lambda n: n.sort_key))
        return f"alarm {region} cause {action.cause.value}"
    if isinstance(action, RevokeAlarmAction):
        region = " ".join(str(n) for n in sorted(action.region, key=lambda n: n.sort_key))
        return f"revoke {region}"
    if isinstance(action, PairDevicesAction):
        return f"pair {action.a} {action.b}"
    if isinstance(action, PostMessageAction):
        base = f"post {action.device} {_quote(action.body)}"
        if not action.signature_valid:
            base += " unsigned"
        return base
    if isinstance(action, SetGuidanceAction):
        return f"guidance {action.light} {action.state.value}"
    raise TypeError(f"unknown action {action!r}")
