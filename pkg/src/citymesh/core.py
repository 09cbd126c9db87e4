"""Shared domain types: node identities, the simulation time model, and the
24-byte sensor frame wire format used by every other module.

All types here are immutable values, safe to share between threads.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from enum import Enum, IntEnum

# Simulation time: integer milliseconds since scenario start.
SimTime = int


class CityMeshError(Exception):
    """Base class for every error raised by this package."""


class EncodingError(CityMeshError):
    """A value cannot be represented on the wire."""


class DecodingError(CityMeshError):
    """A byte sequence does not parse as the expected wire format."""


class NodeKind(Enum):
    STREET_LIGHT = "light"
    CITIZEN_DEVICE = "device"
    COMMAND_CENTER = "center"


@dataclass(frozen=True)
class NodeId:
    """Identity of a simulated node; (kind, index) is unique per scenario."""

    kind: NodeKind
    index: int

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError(f"node index must be non-negative, got {self.index}")

    @property
    def label(self) -> str:
        if self.kind is NodeKind.COMMAND_CENTER and self.index == 0:
            return "center"
        return f"{self.kind.value}:{self.index}"

    @property
    def sort_key(self) -> tuple[str, int]:
        return (self.kind.value, self.index)

    @classmethod
    def parse(cls, text: str) -> "NodeId":
        text = text.strip()
        if text == "center":
            return cls(NodeKind.COMMAND_CENTER, 0)
        kind_name, sep, index = text.partition(":")
        if not sep:
            raise ValueError(f"malformed node id {text!r}, expected kind:index")
        for kind in NodeKind:
            if kind.value == kind_name:
                try:
                    return cls(kind, int(index))
                except ValueError:
                    raise ValueError(f"malformed node index in {text!r}") from None
        raise ValueError(f"unknown node kind in {text!r}")

    def __str__(self) -> str:
        return self.label


def light_id(index: int) -> NodeId:
    return NodeId(NodeKind.STREET_LIGHT, index)


def device_id(index: int) -> NodeId:
    return NodeId(NodeKind.CITIZEN_DEVICE, index)


CENTER = NodeId(NodeKind.COMMAND_CENTER, 0)


class SensorKind(IntEnum):
    """The six sensors of a street light, in fixed wire order."""

    MOTION = 0
    INFRARED_LIGHT = 1
    BROADBAND_LIGHT = 2
    TEMPERATURE = 3
    HUMIDITY = 4
    CO2 = 5

    @property
    def topic_name(self) -> str:
        return _TOPIC_NAMES[self]

    @classmethod
    def from_topic_name(cls, name: str) -> "SensorKind":
        for kind, topic in _TOPIC_NAMES.items():
            if topic == name:
                return kind
        raise ValueError(f"unknown sensor name {name!r}")


_TOPIC_NAMES = {
    SensorKind.MOTION: "motion",
    SensorKind.INFRARED_LIGHT: "infrared",
    SensorKind.BROADBAND_LIGHT: "broadband",
    SensorKind.TEMPERATURE: "temperature",
    SensorKind.HUMIDITY: "humidity",
    SensorKind.CO2: "co2",
}

N_SENSORS = len(SensorKind)
BITS_PER_READING = 32
FRAME_PAYLOAD_BYTES = N_SENSORS * BITS_PER_READING // 8  # 24
FRAME_PAYLOAD_BITS = N_SENSORS * BITS_PER_READING  # 192

_FRAME_STRUCT = struct.Struct(">6f")
_F32 = struct.Struct(">f")


def quantize32(value: float) -> float:
    """Round a float to the nearest IEEE-754 single, the precision sensors report."""
    try:
        return _F32.unpack(_F32.pack(value))[0]
    except OverflowError:
        return math.copysign(math.inf, value)


@dataclass(frozen=True)
class SensorFrame:
    """One timestamped vector of six single-precision readings from one light."""

    light: NodeId
    time: SimTime
    readings: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.readings) != N_SENSORS:
            raise ValueError(f"expected {N_SENSORS} readings, got {len(self.readings)}")
        if self.time < 0:
            raise ValueError("frame time must be non-negative")
        object.__setattr__(self, "readings", tuple(quantize32(v) for v in self.readings))

    def reading(self, kind: SensorKind) -> float:
        return self.readings[kind]


def encode_frame(frame: SensorFrame) -> bytes:
    """Serialize a frame's readings as six big-endian singles (24-byte payload)."""
    if not all(math.isfinite(v) for v in frame.readings):
        raise EncodingError(f"non-finite reading in frame from {frame.light}")
    return _FRAME_STRUCT.pack(*frame.readings)


def decode_frame(payload: bytes, light: NodeId, time: SimTime) -> SensorFrame:
    """Inverse of :func:`encode_frame`; the identifier and timestamp live in framing."""
    if len(payload) != FRAME_PAYLOAD_BYTES:
        raise DecodingError(
            f"frame payload must be {FRAME_PAYLOAD_BYTES} bytes, got {len(payload)}"
        )
    return SensorFrame(light=light, time=time, readings=_FRAME_STRUCT.unpack(payload))


class Mode(Enum):
    EVERYDAY = "everyday"
    EMERGENCY = "emergency"


class GuidanceState(Enum):
    OFF = "off"
    AVAILABLE = "available"
    OUT_OF_ORDER = "out-of-order"
    CHARGING = "charging"
    SAFE_DIRECTION = "safe"
    BLOCKED = "blocked"

    def allowed_in(self, mode: Mode) -> bool:
        if self is GuidanceState.OFF:
            return True
        if self in (GuidanceState.SAFE_DIRECTION, GuidanceState.BLOCKED):
            return mode is Mode.EMERGENCY
        return mode is Mode.EVERYDAY
