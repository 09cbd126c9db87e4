// Pure reducer from event-stream records onto the snapshot shape.
//
// Invariant: every rendered datum comes from /api/snapshot or a stream
// record — the reducer never invents state. Applying a full recorded event
// log to the initial snapshot must reproduce the engine's final snapshot
// exactly (covered by the replay tests).

import { compareLinks } from "./nodes.js";
import type { AlarmView, EventRecord, LinkView, Snapshot } from "./types.js";

export const ALERT_CAP = 50;

export interface ReduceResult {
  snapshot: Snapshot;
  /** set when the record referenced an unknown node: surfaced in the feed */
  warning?: string;
}

function sortAlarms(alarms: AlarmView[]): AlarmView[] {
  return [...alarms].sort(
    (a, b) =>
      a.issued_ms - b.issued_ms ||
      (a.cause < b.cause ? -1 : a.cause > b.cause ? 1 : 0),
  );
}

export function reduceEvent(snap: Snapshot, ev: EventRecord): ReduceResult {
  const next: Snapshot = { ...snap, time_ms: ev.t };
  switch (ev.kind) {
    case "sensor": {
      const light = String(ev.light);
      const idx = next.lights.findIndex((l) => l.id === light);
      if (idx < 0) return unknown(next, ev, light);
      const cur = next.lights[idx]!;
      next.lights = [...next.lights];
      next.lights[idx] = {
        ...cur,
        readings: { ...(cur.readings ?? {}), [String(ev.sensor)]: Number(ev.value) },
        last_frame_ms: Number(ev.sampled_ms),
      };
      return { snapshot: next };
    }
    case "mode": {
      const node = String(ev.node);
      const emergency = ev.mode === "emergency";
      if (node.startsWith("light:")) {
        const idx = next.lights.findIndex((l) => l.id === node);
        if (idx < 0) return unknown(next, ev, node);
        next.lights = [...next.lights];
        next.lights[idx] = {
          ...next.lights[idx]!,
          mode: emergency ? "emergency" : "everyday",
        };
        return { snapshot: next };
      }
      const idx = next.devices.findIndex((d) => d.id === node);
      if (idx < 0) return unknown(next, ev, node);
      next.devices = [...next.devices];
      next.devices[idx] = { ...next.devices[idx]!, emergency };
      return { snapshot: next };
    }
    case "guidance": {
      const light = String(ev.light);
      const idx = next.lights.findIndex((l) => l.id === light);
      if (idx < 0) return unknown(next, ev, light);
      next.lights = [...next.lights];
      next.lights[idx] = { ...next.lights[idx]!, guidance: String(ev.state) };
      return { snapshot: next };
    }
    case "alert": {
      const entry = {
        time_ms: Number(ev.detected_ms),
        source: String(ev.source),
        cause: String(ev.cause),
      };
      next.alerts = [...next.alerts, entry].slice(-ALERT_CAP);
      return { snapshot: next };
    }
    case "alarm": {
      const alarm: AlarmView = {
        region: (ev.region as string[]).slice(),
        issued_ms: ev.t,
        cause: String(ev.cause),
      };
      next.alarms = sortAlarms([...next.alarms, alarm]);
      return { snapshot: next };
    }
    case "revoke": {
      const region = new Set(ev.region as string[]);
      next.alarms = next.alarms.filter(
        (a) => !a.region.some((light) => region.has(light)),
      );
      return { snapshot: next };
    }
    case "link": {
      const entry: LinkView = {
        a: String(ev.a),
        b: String(ev.b),
        kind: String(ev.link_kind),
        up: Boolean(ev.up),
      };
      const rest = next.links.filter(
        (l) => !(l.a === entry.a && l.b === entry.b && l.kind === entry.kind),
      );
      next.links = [...rest, entry].sort(compareLinks);
      return { snapshot: next };
    }
    case "crdt": {
      const node = String(ev.node);
      const messages = Number(ev.messages);
      const size = Number(ev.size_bytes);
      if (node === "center") {
        if (!next.center) return unknown(next, ev, node);
        next.center = { ...next.center, messages, size_bytes: size };
        return { snapshot: next };
      }
      if (node.startsWith("light:")) {
        const idx = next.lights.findIndex((l) => l.id === node);
        if (idx < 0) return unknown(next, ev, node);
        next.lights = [...next.lights];
        next.lights[idx] = { ...next.lights[idx]!, messages, size_bytes: size };
        return { snapshot: next };
      }
      const idx = next.devices.findIndex((d) => d.id === node);
      if (idx < 0) return unknown(next, ev, node);
      next.devices = [...next.devices];
      next.devices[idx] = { ...next.devices[idx]!, messages, size_bytes: size };
      return { snapshot: next };
    }
    case "run_complete": {
      next.time_ms = Number(ev.duration_ms);
      return { snapshot: next };
    }
    default:
      // feed-only record (delivery, push, detected, ...): time advances only
      return { snapshot: next };
  }
}

function unknown(snap: Snapshot, ev: EventRecord, label: string): ReduceResult {
  return {
    snapshot: snap,
    warning: `event '${ev.kind}' references unknown node ${label}`,
  };
}

export function reduceAll(snapshot: Snapshot, events: EventRecord[]): Snapshot {
  for (const ev of events) {
    snapshot = reduceEvent(snapshot, ev).snapshot;
  }
  return snapshot;
}
