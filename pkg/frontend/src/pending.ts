// Optimistic operator actions: posted to the API, shown as pending, then
// reconciled against the echoed stream record or surfaced as rejected.

import type { EventRecord } from "./types.js";

export type PendingStatus = "pending" | "confirmed" | "rejected" | "timeout";

export interface PendingAction {
  id: number;
  kind: string; // alarm | revoke | guidance | failure | pair
  summary: string;
  detail: Record<string, unknown>;
  submitted_wall: number;
  status: PendingStatus;
  error?: string;
}

function sameRegion(a: unknown, b: unknown): boolean {
  const xs = (a as string[]) ?? [];
  const ys = (b as string[]) ?? [];
  return xs.length === ys.length && xs.every((x, i) => x === ys[i]);
}

/** Does a stream record echo this pending action? */
export function matchesEcho(action: PendingAction, ev: EventRecord): boolean {
  switch (action.kind) {
    case "alarm":
      return ev.kind === "alarm" && sameRegion(ev.region, action.detail.region);
    case "revoke":
      return ev.kind === "revoke" && sameRegion(ev.region, action.detail.region);
    case "guidance":
      return (
        (ev.kind === "guidance" || ev.kind === "guidance_rejected") &&
        ev.light === action.detail.light &&
        (ev.state === action.detail.state || ev.kind === "guidance_rejected")
      );
    case "pair":
      return (
        ev.kind === "pair" &&
        ((ev.a === action.detail.a && ev.b === action.detail.b) ||
          (ev.a === action.detail.b && ev.b === action.detail.a))
      );
    case "failure":
      return ev.kind === "failure" && ev.failure === action.detail.kind;
    default:
      return false;
  }
}

export class PendingTracker {
  private next = 1;
  actions: PendingAction[] = [];

  constructor(private timeoutMs = 10_000) {}

  submit(kind: string, summary: string, detail: Record<string, unknown>): PendingAction {
    const action: PendingAction = {
      id: this.next++,
      kind,
      summary,
      detail,
      submitted_wall: Date.now(),
      status: "pending",
    };
    this.actions = [...this.actions, action];
    return action;
  }

  reject(id: number, error: string): void {
    this.actions = this.actions.map((a) =>
      a.id === id ? { ...a, status: "rejected", error } : a,
    );
  }

  /** Reconcile one stream record; returns true when it confirmed something. */
  reconcile(ev: EventRecord): boolean {
    let hit = false;
    this.actions = this.actions.map((a) => {
      if (a.status === "pending" && !hit && matchesEcho(a, ev)) {
        hit = true;
        return ev.kind === "guidance_rejected"
          ? { ...a, status: "rejected" as const, error: String(ev.reason ?? "rejected") }
          : { ...a, status: "confirmed" as const };
      }
      return a;
    });
    return hit;
  }

  /** Age out pending entries that never saw an echo. */
  expire(now = Date.now()): void {
    this.actions = this.actions.map((a) =>
      a.status === "pending" && now - a.submitted_wall > this.timeoutMs
        ? { ...a, status: "timeout" }
        : a,
    );
  }

  /** Drop resolved entries older than a short linger, keep the list tidy. */
  prune(now = Date.now(), lingerMs = 6_000): void {
    this.actions = this.actions.filter(
      (a) => a.status === "pending" || now - a.submitted_wall < this.timeoutMs + lingerMs,
    );
  }
}
