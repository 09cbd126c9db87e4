"""Street-light behavior: synthetic sensing, in-situ crisis detection, and the
everyday/emergency functional-morphing state machine.

A ``LightNode`` is an immutable value owned by the scenario engine; every
operation returns a new node (plus any emitted notifications) instead of
mutating in place.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

from .core import (
    CityMeshError,
    GuidanceState,
    Mode,
    NodeId,
    NodeKind,
    SensorFrame,
    SensorKind,
    SimTime,
)


class SchedulingError(CityMeshError):
    """A sample was requested before it was due."""


class RuleInputError(CityMeshError):
    """Detection rules were fed an unsorted or foreign frame history."""


class GuidanceError(CityMeshError):
    """A guidance state was requested that the current mode does not permit."""


class CrisisCause(Enum):
    FIRE_RULE = "fire-rule"
    VISION_EVENT = "vision"
    OPERATOR_ALARM = "operator"


class RuleKind(Enum):
    FIRE_RULE = "fire-rule"
    VISION_EVENT = "vision"


DEFAULT_EVERYDAY_INTERVAL_MS = 30_000
DEFAULT_EMERGENCY_INTERVAL_MS = 5_000


@dataclass(frozen=True)
class SamplingPolicy:
    interval_everyday_ms: int = DEFAULT_EVERYDAY_INTERVAL_MS
    interval_emergency_ms: int = DEFAULT_EMERGENCY_INTERVAL_MS

    def __post_init__(self) -> None:
        if self.interval_everyday_ms <= 0 or self.interval_emergency_ms <= 0:
            raise ValueError("sampling intervals must be strictly positive")
        if self.interval_emergency_ms >= self.interval_everyday_ms:
            raise ValueError("emergency interval must be shorter than everyday interval")

    def interval_for(self, mode: Mode) -> int:
        if mode is Mode.EMERGENCY:
            return self.interval_emergency_ms
        return self.interval_everyday_ms


@dataclass(frozen=True)
class DetectionRule:
    """An in-situ crisis detector evaluated at the light on every new frame.

    The fire rule fires when the particulate/CO2 proxy spikes while the
    temperature rises sharply inside the window; the vision rule is the
    stand-in for the on-device camera detector and fires on scripted vision
    marks in the environment trace.
    """

    kind: RuleKind = RuleKind.FIRE_RULE
    particulate_threshold: float = 1000.0
    temp_rise_threshold: float = 10.0
    window_ms: int = 60_000

    def __post_init__(self) -> None:
        if self.particulate_threshold <= 0 or self.temp_rise_threshold <= 0:
            raise ValueError("rule thresholds must be strictly positive")
        if self.window_ms <= 0:
            raise ValueError("rule window must be strictly positive")


@dataclass(frozen=True)
class CrisisAlert:
    source: NodeId
    time: SimTime
    cause: CrisisCause

    def __post_init__(self) -> None:
        if self.source.kind is NodeKind.CITIZEN_DEVICE:
            raise ValueError("alerts originate at street lights or the command center")


@dataclass(frozen=True)
class AllClear:
    """Revocation issued by the command center; lights never self-revoke."""

    source: NodeId
    time: SimTime


@dataclass(frozen=True)
class PushNotification:
    """Morph-time notification to one currently connected citizen device."""

    device: NodeId
    light: NodeId
    time: SimTime
    cause: CrisisCause


@dataclass(frozen=True)
class Ramp:
    """Linear drift of one sensor toward a target value, then hold."""

    sensor: SensorKind
    start: SimTime
    duration_ms: int
    target: float


@dataclass(frozen=True)
class VisionMark:
    """Scripted camera detection, active on [start, start + duration]."""

    start: SimTime
    duration_ms: int


def _flat() -> tuple[float, ...]:
    return (0.0,) * len(SensorKind)


@dataclass(frozen=True)
class EnvironmentTrace:
    """Synthetic per-light environment: baselines, noise amplitudes, ramps,
    and scripted vision marks."""

    base: tuple[float, ...] = field(default_factory=_flat)
    noise: tuple[float, ...] = field(default_factory=_flat)
    ramps: tuple[Ramp, ...] = ()
    vision: tuple[VisionMark, ...] = ()

    @classmethod
    def from_values(
        cls,
        base: dict[SensorKind, float] | None = None,
        noise: dict[SensorKind, float] | None = None,
    ) -> "EnvironmentTrace":
        base = base or {}
        noise = noise or {}
        return cls(
            base=tuple(base.get(k, 0.0) for k in SensorKind),
            noise=tuple(noise.get(k, 0.0) for k in SensorKind),
        )

    def with_ramp(self, ramp: Ramp) -> "EnvironmentTrace":
        return replace(self, ramps=self.ramps + (ramp,))

    def with_vision(self, mark: VisionMark) -> "EnvironmentTrace":
        return replace(self, vision=self.vision + (mark,))

    def value_at(self, sensor: SensorKind, time: SimTime) -> float:
        # Each ramp starts from the trace value at its own start time, so
        # sequential ramps chain and a later ramp overrides an earlier one.
        value = self.base[sensor]
        active: Ramp | None = None
        for ramp in sorted(
            (r for r in self.ramps if r.sensor is sensor), key=lambda r: r.start
        ):
            if ramp.start > time:
                break
            value = _ramp_value(active, value, ramp.start)
            active = ramp
        return _ramp_value(active, value, time)

    def vision_active(self, time: SimTime) -> bool:
        return any(m.start <= time <= m.start + m.duration_ms for m in self.vision)


def _ramp_value(ramp: Ramp | None, start_value: float, time: SimTime) -> float:
    if ramp is None or time <= ramp.start:
        return start_value
    if ramp.duration_ms <= 0 or time >= ramp.start + ramp.duration_ms:
        return ramp.target
    frac = (time - ramp.start) / ramp.duration_ms
    return start_value + (ramp.target - start_value) * frac


def default_rules() -> tuple[DetectionRule, ...]:
    return (DetectionRule(RuleKind.FIRE_RULE), DetectionRule(RuleKind.VISION_EVENT))


@dataclass(frozen=True)
class LightNode:
    id: NodeId
    mode: Mode = Mode.EVERYDAY
    policy: SamplingPolicy = SamplingPolicy()
    guidance: GuidanceState = GuidanceState.OFF
    rules: tuple[DetectionRule, ...] = field(default_factory=default_rules)
    last_sample: SimTime = 0
    environment: EnvironmentTrace = EnvironmentTrace()

    def __post_init__(self) -> None:
        if self.id.kind is not NodeKind.STREET_LIGHT:
            raise ValueError("LightNode id must be a street light")
        if not self.guidance.allowed_in(self.mode):
            raise ValueError(f"guidance {self.guidance.value} invalid in {self.mode.value} mode")
        for rule in self.rules:
            if rule.window_ms < self.policy.interval_emergency_ms:
                raise ValueError("rule window shorter than the emergency sampling interval")


def next_sample_time(node: LightNode) -> SimTime:
    return node.last_sample + node.policy.interval_for(node.mode)


def sample(
    node: LightNode, time: SimTime, rng: random.Random | None = None
) -> tuple[SensorFrame, LightNode]:
    """Read the environment trace at ``time`` plus seeded noise.

    Returns the frame and the node with ``last_sample`` advanced.
    """
    due = next_sample_time(node)
    if time < due:
        raise SchedulingError(f"{node.id} sample at {time} ms before due time {due} ms")
    readings = []
    for kind in SensorKind:
        value = node.environment.value_at(kind, time)
        amp = node.environment.noise[kind]
        if amp > 0 and rng is not None:
            value += rng.uniform(-amp, amp)
        readings.append(value)
    frame = SensorFrame(light=node.id, time=time, readings=tuple(readings))
    return frame, replace(node, last_sample=time)


def evaluate_rules(node: LightNode, history: Sequence[SensorFrame]) -> CrisisAlert | None:
    """Run the node's detection rules over a frame history ending now.

    Fire rule: latest CO2 proxy above threshold AND temperature span inside
    the window above the rise threshold. Vision rule: a scripted vision mark
    active at the latest frame's time.
    """
    if not history:
        return None
    for prev, cur in zip(history, history[1:]):
        if cur.time < prev.time:
            raise RuleInputError("frame history must be sorted by time")
    for frame in history:
        if frame.light != node.id:
            raise RuleInputError(f"frame from {frame.light} fed to rules of {node.id}")
    latest = history[-1]
    for rule in node.rules:
        if rule.kind is RuleKind.FIRE_RULE:
            window = [f for f in history if f.time >= latest.time - rule.window_ms]
            temps = [f.reading(SensorKind.TEMPERATURE) for f in window]
            if (
                latest.reading(SensorKind.CO2) > rule.particulate_threshold
                and max(temps) - min(temps) > rule.temp_rise_threshold
            ):
                return CrisisAlert(node.id, latest.time, CrisisCause.FIRE_RULE)
        elif rule.kind is RuleKind.VISION_EVENT:
            if node.environment.vision_active(latest.time):
                return CrisisAlert(node.id, latest.time, CrisisCause.VISION_EVENT)
    return None


def morph(
    node: LightNode,
    trigger: CrisisAlert | AllClear,
    connected: Iterable[NodeId] = (),
) -> tuple[LightNode, list[PushNotification]]:
    """Switch operating mode on a crisis alert or an all-clear.

    Entering emergency pushes a notification to every currently connected
    citizen device. Triggers matching the current mode are no-ops. Guidance
    resets to OFF on every transition since no guidance state is valid in
    both modes.
    """
    if isinstance(trigger, CrisisAlert):
        if node.mode is Mode.EMERGENCY:
            return node, []
        morphed = replace(node, mode=Mode.EMERGENCY, guidance=GuidanceState.OFF)
        pushes = [
            PushNotification(device=d, light=node.id, time=trigger.time, cause=trigger.cause)
            for d in connected
        ]
        return morphed, pushes
    if node.mode is Mode.EVERYDAY:
        return node, []
    return replace(node, mode=Mode.EVERYDAY, guidance=GuidanceState.OFF), []


def set_guidance(node: LightNode, state: GuidanceState) -> LightNode:
    if not state.allowed_in(node.mode):
        raise GuidanceError(f"guidance {state.value} not permitted in {node.mode.value} mode")
    return replace(node, guidance=state)
