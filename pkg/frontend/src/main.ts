// Console wiring: one session, one reducer, one pending tracker, throttled
// rendering. Operator controls post to the API and reconcile on echoes.

import { connect, postAction } from "./api.js";
import { reduceEvent } from "./model.js";
import { PendingTracker } from "./pending.js";
import {
  describeRecord,
  renderAlarms,
  renderAlerts,
  renderClock,
  renderDevices,
  renderFeed,
  renderLights,
  renderMap,
  renderPending,
  type FeedEntry,
} from "./render.js";
import type { EventRecord, Snapshot } from "./types.js";

const FEED_CAP = 400;

const params = new URLSearchParams(window.location.search);
const base = params.get("api") ?? "";

let snapshot: Snapshot | null = null;
let connected = false;
const feed: FeedEntry[] = [];
const pending = new PendingTracker();

const $ = (id: string): HTMLElement => {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
};

const svg = $("map") as unknown as SVGSVGElement;
let renderQueued = false;

function requestRender(): void {
  if (renderQueued) return;
  renderQueued = true;
  requestAnimationFrame(() => {
    renderQueued = false;
    render();
  });
}

function render(): void {
  $("banner").classList.toggle("hidden", connected);
  if (!snapshot) return;
  renderClock($("clock"), snapshot, connected);
  renderMap(svg, snapshot);
  renderLights($("lights"), snapshot);
  renderDevices($("devices"), snapshot);
  renderAlarms($("alarms"), snapshot, (region) => {
    void submit("revoke", `revoke ${region.join(", ")}`, "/api/revoke", { region });
  });
  renderAlerts($("alerts"), snapshot);
  renderFeed($("feed"), feed);
  renderPending($("pending"), pending.actions);
  refreshSelectors(snapshot);
}

function pushFeed(entry: FeedEntry): void {
  feed.push(entry);
  if (feed.length > FEED_CAP) feed.splice(0, feed.length - FEED_CAP);
}

// speed factor is CLI-controlled; the console only displays it
void fetch(`${base}/api/info`)
  .then((resp) => (resp.ok ? resp.json() : null))
  .then((info: { speed?: number } | null) => {
    if (info?.speed) $("speed").textContent = `speed x${info.speed}`;
  })
  .catch(() => undefined);

connect(base, {
  onSnapshot(snap) {
    snapshot = snap;
    requestRender();
  },
  onRecord(record: EventRecord) {
    if (!snapshot) return;
    const { snapshot: next, warning } = reduceEvent(snapshot, record);
    snapshot = next;
    if (warning) {
      pushFeed({ t: record.t, text: warning, warning: true });
    } else {
      const text = describeRecord(record);
      if (text) pushFeed({ t: record.t, text });
    }
    pending.reconcile(record);
    requestRender();
  },
  onStatus(up) {
    connected = up;
    requestRender();
  },
});

window.setInterval(() => {
  pending.expire();
  pending.prune();
  requestRender();
}, 2_000);

// --- operator actions -----------------------------------------------------

async function submit(
  kind: string,
  summary: string,
  path: string,
  body: Record<string, unknown>,
): Promise<void> {
  const action = pending.submit(kind, summary, { ...body, kind: body.kind ?? kind });
  requestRender();
  const result = await postAction(base, path, body);
  if (!result.ok) {
    pending.reject(action.id, result.error ?? "rejected");
    requestRender();
  }
}

function selectedValues(select: HTMLSelectElement): string[] {
  return [...select.selectedOptions].map((o) => o.value);
}

function refreshSelectors(snap: Snapshot): void {
  const lightIds = snap.lights.map((l) => l.id);
  const deviceIds = snap.devices.map((d) => d.id);
  syncOptions($("alarm-region") as HTMLSelectElement, lightIds);
  syncOptions($("guidance-light") as HTMLSelectElement, lightIds);
  syncOptions($("pair-a") as HTMLSelectElement, deviceIds);
  syncOptions($("pair-b") as HTMLSelectElement, deviceIds);
  syncOptions($("partition-nodes") as HTMLSelectElement, [
    ...lightIds,
    ...deviceIds,
    ...(snap.center ? ["center"] : []),
  ]);
}

function syncOptions(select: HTMLSelectElement, ids: string[]): void {
  const existing = [...select.options].map((o) => o.value);
  if (existing.length === ids.length && existing.every((v, i) => v === ids[i])) return;
  const chosen = new Set(selectedValues(select));
  select.replaceChildren();
  for (const id of ids) {
    const option = document.createElement("option");
    option.value = id;
    option.textContent = id;
    option.selected = chosen.has(id);
    select.appendChild(option);
  }
}

$("issue-alarm").addEventListener("click", () => {
  const region = selectedValues($("alarm-region") as HTMLSelectElement);
  const cause = ($("alarm-cause") as HTMLSelectElement).value;
  if (region.length === 0) return;
  void submit("alarm", `alarm ${region.join(", ")}`, "/api/alarm", { region, cause });
});

$("set-guidance").addEventListener("click", () => {
  const light = ($("guidance-light") as HTMLSelectElement).value;
  const state = ($("guidance-state") as HTMLSelectElement).value;
  if (!light) return;
  void submit("guidance", `guidance ${light} ${state}`, "/api/guidance", { light, state });
});

$("pair-devices").addEventListener("click", () => {
  const a = ($("pair-a") as HTMLSelectElement).value;
  const b = ($("pair-b") as HTMLSelectElement).value;
  if (!a || !b || a === b) return;
  void submit("pair", `pair ${a} + ${b}`, "/api/pair", { a, b });
});

$("server-down").addEventListener("click", () => {
  void submit("failure", "server down", "/api/failure", { kind: "server-down" });
});

$("heal").addEventListener("click", () => {
  void submit("failure", "heal partitions", "/api/failure", { kind: "heal" });
});

$("partition").addEventListener("click", () => {
  const nodes = selectedValues($("partition-nodes") as HTMLSelectElement);
  if (nodes.length === 0) return;
  void submit("failure", `partition ${nodes.join(", ")}`, "/api/failure", {
    kind: "partition",
    nodes,
  });
});
