// Server session: snapshot fetch, SSE subscription with automatic
// resubscribe (plus snapshot refresh) on stream drop, and command posts.

import type { EventRecord, Snapshot } from "./types.js";

export interface SessionCallbacks {
  onSnapshot(snapshot: Snapshot): void;
  onRecord(record: EventRecord): void;
  onStatus(connected: boolean): void;
}

export interface Session {
  close(): void;
}

const RETRY_MS = 2_000;

export function connect(base: string, cb: SessionCallbacks): Session {
  let source: EventSource | null = null;
  let timer: number | null = null;
  let closed = false;

  async function open(): Promise<void> {
    if (closed) return;
    try {
      const resp = await fetch(`${base}/api/snapshot`);
      if (!resp.ok) throw new Error(`snapshot: HTTP ${resp.status}`);
      cb.onSnapshot((await resp.json()) as Snapshot);
    } catch {
      cb.onStatus(false);
      schedule();
      return;
    }
    source = new EventSource(`${base}/api/events`);
    source.onopen = () => cb.onStatus(true);
    source.onmessage = (msg) => {
      try {
        cb.onRecord(JSON.parse(msg.data) as EventRecord);
      } catch {
        // a malformed record is surfaced by dropping it, never by crashing
      }
    };
    source.onerror = () => {
      cb.onStatus(false);
      source?.close();
      source = null;
      schedule();
    };
  }

  function schedule(): void {
    if (closed || timer !== null) return;
    timer = window.setTimeout(() => {
      timer = null;
      void open();
    }, RETRY_MS);
  }

  void open();
  return {
    close() {
      closed = true;
      if (timer !== null) window.clearTimeout(timer);
      source?.close();
    },
  };
}

export interface PostResult {
  ok: boolean;
  error?: string;
  at_ms?: number;
}

export async function postAction(
  base: string,
  path: string,
  body: Record<string, unknown>,
): Promise<PostResult> {
  try {
    const resp = await fetch(`${base}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    const payload = (await resp.json()) as { error?: string; at_ms?: number };
    if (!resp.ok) {
      return { ok: false, error: payload.error ?? `HTTP ${resp.status}` };
    }
    return { ok: true, at_ms: payload.at_ms };
  } catch (err) {
    return { ok: false, error: String(err) };
  }
}
