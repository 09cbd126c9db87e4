"""The command-center aggregate: the city-wide view assembled from whatever
reaches the center, plus operator alarm issue/revoke.

The aggregate is mutated only by the scenario engine's event loop; all
methods here are plain single-threaded state updates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .core import (
    CENTER,
    CityMeshError,
    GuidanceState,
    Mode,
    NodeId,
    SensorFrame,
    SensorKind,
    SimTime,
)
from .light import AllClear, CrisisAlert, CrisisCause


class UnknownSourceError(CityMeshError):
    """Ingested data referenced a light the center does not know."""


class AlarmError(CityMeshError):
    """Alarm issue/revoke with an empty, foreign, or uncovered region."""


@dataclass(frozen=True)
class Alarm:
    region: frozenset[NodeId]
    issued: SimTime
    cause: CrisisCause


@dataclass(frozen=True)
class MorphCommand:
    """A mode-change order dispatched from the center to one light."""

    light: NodeId
    trigger: CrisisAlert | AllClear


@dataclass
class LightStatus:
    mode: Mode = Mode.EVERYDAY
    guidance: GuidanceState = GuidanceState.OFF
    latest: SensorFrame | None = None


class CityAggregate:
    """What the command center knows: latest frame, mode, and guidance per
    light (as reported over the mesh), active alarms, and the alert log."""

    def __init__(self, lights: list[NodeId]):
        self.lights: dict[NodeId, LightStatus] = {l: LightStatus() for l in lights}
        self.alarms: list[Alarm] = []
        self.alert_log: list[CrisisAlert] = []

    def ingest(self, item: SensorFrame | CrisisAlert) -> bool:
        """Fold one arrival into the view. Returns False for a stale frame
        (older than the stored latest), which is discarded."""
        if isinstance(item, SensorFrame):
            if item.light not in self.lights:
                raise UnknownSourceError(f"frame from undeclared light {item.light}")
            status = self.lights[item.light]
            if status.latest is not None and item.time < status.latest.time:
                return False
            status.latest = item
            return True
        if isinstance(item, CrisisAlert):
            if item.source != CENTER and item.source not in self.lights:
                raise UnknownSourceError(f"alert from undeclared source {item.source}")
            self.alert_log.append(item)
            return True
        raise TypeError(f"cannot ingest {type(item).__name__}")

    def note_mode(self, light: NodeId, mode: Mode) -> None:
        if light not in self.lights:
            raise UnknownSourceError(f"mode report from undeclared light {light}")
        self.lights[light].mode = mode

    def note_guidance(self, light: NodeId, state: GuidanceState) -> None:
        if light not in self.lights:
            raise UnknownSourceError(f"guidance report from undeclared light {light}")
        self.lights[light].guidance = state

    def issue_alarm(
        self, region: frozenset[NodeId], cause: CrisisCause, now: SimTime
    ) -> list[MorphCommand]:
        """Record an alarm and order every light in the region to morph."""
        if not region:
            raise AlarmError("alarm region is empty")
        unknown = {l for l in region if l not in self.lights}
        if unknown:
            raise AlarmError(f"alarm region has undeclared lights: {sorted(map(str, unknown))}")
        self.alarms.append(Alarm(region=region, issued=now, cause=cause))
        trigger = CrisisAlert(source=CENTER, time=now, cause=cause)
        return [MorphCommand(light, trigger) for light in sorted(region, key=lambda n: n.sort_key)]

    def revoke_alarm(self, region: frozenset[NodeId], now: SimTime) -> list[MorphCommand]:
        """Withdraw the alarms covering the region and send all-clears.

        Every light in the region must be under an active alarm; alarms
        intersecting the region are removed whole.
        """
        if not region:
            raise AlarmError("revoke region is empty")
        covered = set()
        for alarm in self.alarms:
            covered |= alarm.region
        uncovered = region - covered
        if uncovered:
            raise AlarmError(f"no active alarm covers: {sorted(map(str, uncovered))}")
        self.alarms = [a for a in self.alarms if not (a.region & region)]
        trigger = AllClear(source=CENTER, time=now)
        return [MorphCommand(light, trigger) for light in sorted(region, key=lambda n: n.sort_key)]

    def snapshot_lights(self) -> list[dict]:
        out = []
        for light in sorted(self.lights, key=lambda n: n.sort_key):
            status = self.lights[light]
            entry: dict = {
                "id": light.label,
                "mode": status.mode.value,
                "guidance": status.guidance.value,
                "readings": None,
                "last_frame_ms": None,
            }
            if status.latest is not None:
                entry["readings"] = {
                    kind.topic_name: status.latest.reading(kind) for kind in SensorKind
                }
                entry["last_frame_ms"] = status.latest.time
            out.append(entry)
        return out
