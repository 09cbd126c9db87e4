// DOM rendering. All data shown here comes from the reduced snapshot, the
// feed of raw records, and the pending-action tracker; nothing is invented.

import type { PendingAction } from "./pending.js";
import type { EventRecord, Snapshot } from "./types.js";

export interface FeedEntry {
  t: number;
  text: string;
  warning?: boolean;
}

const SVG_NS = "http://www.w3.org/2000/svg";
const FEED_SHOWN = 120;

export function describeRecord(ev: EventRecord): string | null {
  switch (ev.kind) {
    case "alert":
      return `ALERT ${ev.source}: ${ev.cause}`;
    case "detected":
      return `${ev.light} detected ${ev.cause} in-situ`;
    case "alarm":
      return `alarm issued over ${(ev.region as string[]).join(", ")} (${ev.cause})`;
    case "revoke":
      return `alarm revoked over ${(ev.region as string[]).join(", ")}`;
    case "mode":
      return `${ev.node} -> ${ev.mode}`;
    case "guidance":
      return `${ev.light} guidance ${ev.state}`;
    case "guidance_rejected":
      return `guidance rejected for ${ev.light}: ${ev.reason}`;
    case "push":
      return `push to ${ev.device} from ${ev.light}`;
    case "post":
      return `${ev.node} posted message ${ev.msg} (${ev.bytes} B)`;
    case "held":
      return `${ev.node} holds ${ev.msg} for review`;
    case "link":
      return `link ${ev.a} -- ${ev.b} (${ev.link_kind}) ${ev.up ? "up" : "down"} [${ev.reason}]`;
    case "failure":
      return `failure injected: ${ev.failure}`;
    case "pair":
      return `paired ${ev.a} and ${ev.b}`;
    case "round_trip":
      return `round trip for ${ev.msg}: ${ev.rt_ms} ms`;
    case "converged":
      return `replicas converged ${ev.since_heal_ms} ms after heal`;
    case "vision":
      return `scripted vision event at ${ev.light}`;
    case "ramp":
      return `${ev.light} ${ev.sensor} ramping to ${ev.target}`;
    case "undeliverable":
      return `undeliverable ${ev.payload} ${ev.source} -> ${ev.dest}`;
    case "run_complete":
      return `scenario complete at ${ev.duration_ms} ms`;
    default:
      return null; // sensor/delivery/crdt records would flood the feed
  }
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function fmtTime(ms: number): string {
  const s = ms / 1000;
  return s >= 60 ? `${Math.floor(s / 60)}m${(s % 60).toFixed(1)}s` : `${s.toFixed(1)}s`;
}

// --- map -------------------------------------------------------------------

interface XY {
  x: number;
  y: number;
}

function positions(snap: Snapshot): Map<string, XY> {
  const out = new Map<string, XY>();
  for (const l of snap.lights) out.set(l.id, { x: l.x, y: l.y });
  for (const d of snap.devices) out.set(d.id, { x: d.x, y: d.y });
  if (snap.center) out.set("center", { x: snap.center.x, y: snap.center.y });
  return out;
}

export function renderMap(svg: SVGSVGElement, snap: Snapshot): void {
  svg.replaceChildren();
  const pos = positions(snap);
  if (pos.size === 0) return;
  const xs = [...pos.values()].map((p) => p.x);
  const ys = [...pos.values()].map((p) => p.y);
  const pad = 14;
  const minX = Math.min(...xs) - pad;
  const maxX = Math.max(...xs) + pad;
  const minY = Math.min(...ys) - pad;
  const maxY = Math.max(...ys) + pad;
  svg.setAttribute("viewBox", `${minX} ${minY} ${maxX - minX} ${maxY - minY}`);

  for (const link of snap.links) {
    const a = pos.get(link.a);
    const b = pos.get(link.b);
    if (!a || !b) continue;
    const line = document.createElementNS(SVG_NS, "line");
    line.setAttribute("x1", String(a.x));
    line.setAttribute("y1", String(a.y));
    line.setAttribute("x2", String(b.x));
    line.setAttribute("y2", String(b.y));
    line.setAttribute("class", `link ${link.kind} ${link.up ? "up" : "down"}`);
    svg.appendChild(line);
  }

  for (const light of snap.lights) {
    const g = document.createElementNS(SVG_NS, "g");
    g.setAttribute("transform", `translate(${light.x} ${light.y})`);
    const ring = document.createElementNS(SVG_NS, "circle");
    ring.setAttribute("r", "7");
    ring.setAttribute("class", `guidance ${light.guidance}`);
    const dot = document.createElementNS(SVG_NS, "circle");
    dot.setAttribute("r", "4.4");
    dot.setAttribute("class", `light ${light.mode}`);
    const label = document.createElementNS(SVG_NS, "text");
    label.setAttribute("y", "-10");
    label.setAttribute("class", "node-label");
    label.textContent = light.id;
    g.append(ring, dot, label);
    svg.appendChild(g);
  }

  for (const device of snap.devices) {
    const g = document.createElementNS(SVG_NS, "g");
    g.setAttribute("transform", `translate(${device.x} ${device.y})`);
    const box = document.createElementNS(SVG_NS, "rect");
    box.setAttribute("x", "-3");
    box.setAttribute("y", "-3");
    box.setAttribute("width", "6");
    box.setAttribute("height", "6");
    box.setAttribute("class", `device ${device.emergency ? "emergency" : "everyday"}`);
    const label = document.createElementNS(SVG_NS, "text");
    label.setAttribute("y", "9");
    label.setAttribute("class", "node-label small");
    label.textContent = `${device.id} (${device.messages})`;
    g.append(box, label);
    svg.appendChild(g);
  }

  if (snap.center) {
    const g = document.createElementNS(SVG_NS, "g");
    g.setAttribute("transform", `translate(${snap.center.x} ${snap.center.y})`);
    const diamond = document.createElementNS(SVG_NS, "path");
    diamond.setAttribute("d", "M 0 -6 L 6 0 L 0 6 L -6 0 Z");
    diamond.setAttribute("class", "center");
    const label = document.createElementNS(SVG_NS, "text");
    label.setAttribute("y", "-9");
    label.setAttribute("class", "node-label");
    label.textContent = "center";
    g.append(diamond, label);
    svg.appendChild(g);
  }
}

// --- panels -------------------------------------------------------------------

export function renderLights(table: HTMLElement, snap: Snapshot): void {
  table.replaceChildren();
  const header = el("tr");
  for (const h of ["light", "mode", "guidance", "temp", "co2", "frame", "msgs"]) {
    header.appendChild(el("th", undefined, h));
  }
  table.appendChild(header);
  for (const light of snap.lights) {
    const row = el("tr", light.mode === "emergency" ? "emergency" : undefined);
    row.appendChild(el("td", undefined, light.id));
    row.appendChild(el("td", `mode ${light.mode}`, light.mode));
    row.appendChild(el("td", `guidance-cell ${light.guidance}`, light.guidance));
    const temp = light.readings?.["temperature"];
    const co2 = light.readings?.["co2"];
    row.appendChild(el("td", undefined, temp === undefined ? "-" : temp.toFixed(1)));
    row.appendChild(el("td", undefined, co2 === undefined ? "-" : co2.toFixed(0)));
    row.appendChild(
      el("td", undefined, light.last_frame_ms === null ? "-" : fmtTime(light.last_frame_ms)),
    );
    row.appendChild(el("td", undefined, String(light.messages)));
    table.appendChild(row);
  }
}

export function renderDevices(list: HTMLElement, snap: Snapshot): void {
  list.replaceChildren();
  for (const device of snap.devices) {
    const item = el("li", device.emergency ? "emergency" : undefined);
    const links = snap.links.filter(
      (l) => l.up && (l.a === device.id || l.b === device.id),
    ).length;
    item.textContent =
      `${device.id} — ${device.emergency ? "emergency" : "everyday"}, ` +
      `${links} link${links === 1 ? "" : "s"}, ${device.messages} msgs ` +
      `(${device.size_bytes} B)`;
    list.appendChild(item);
  }
}

export function renderAlarms(
  list: HTMLElement,
  snap: Snapshot,
  onRevoke: (region: string[]) => void,
): void {
  list.replaceChildren();
  if (snap.alarms.length === 0) {
    list.appendChild(el("li", "empty", "no active alarms"));
    return;
  }
  for (const alarm of snap.alarms) {
    const item = el("li", "alarm");
    item.appendChild(
      el(
        "span",
        undefined,
        `${alarm.cause} over ${alarm.region.join(", ")} since ${fmtTime(alarm.issued_ms)}`,
      ),
    );
    const button = el("button", undefined, "revoke");
    button.addEventListener("click", () => onRevoke(alarm.region));
    item.appendChild(button);
    list.appendChild(item);
  }
}

export function renderAlerts(list: HTMLElement, snap: Snapshot): void {
  list.replaceChildren();
  for (const alert of [...snap.alerts].reverse()) {
    list.appendChild(
      el("li", `alert ${alert.cause}`, `${fmtTime(alert.time_ms)} ${alert.source}: ${alert.cause}`),
    );
  }
}

export function renderFeed(list: HTMLElement, feed: FeedEntry[]): void {
  list.replaceChildren();
  for (const entry of feed.slice(-FEED_SHOWN).reverse()) {
    list.appendChild(
      el("li", entry.warning ? "warning" : undefined, `${fmtTime(entry.t)}  ${entry.text}`),
    );
  }
}

export function renderPending(list: HTMLElement, actions: PendingAction[]): void {
  list.replaceChildren();
  for (const action of [...actions].reverse()) {
    const item = el("li", `pending-${action.status}`);
    item.textContent = `${action.summary} — ${action.status}${
      action.error ? `: ${action.error}` : ""
    }`;
    list.appendChild(item);
  }
}

export function renderClock(node: HTMLElement, snap: Snapshot, connected: boolean): void {
  node.textContent = `t=${fmtTime(snap.time_ms)}${connected ? "" : "  (disconnected)"}`;
}
