// Replay fidelity: folding a recorded event log into the initial snapshot
// must land exactly on the engine's final snapshot, for every bundled
// scenario. Fixtures are produced by
//   citymesh run scenarios/<name>.scenario --record frontend/tests/fixtures/<name>

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { reduceAll, reduceEvent } from "../src/model.js";
import type { EventRecord, Snapshot } from "../src/types.js";

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "fixtures");

function load(name: string): {
  initial: Snapshot;
  events: EventRecord[];
  final: Snapshot;
} {
  const dir = join(FIXTURES, name);
  const initial = JSON.parse(readFileSync(join(dir, "initial.json"), "utf8"));
  const final = JSON.parse(readFileSync(join(dir, "final.json"), "utf8"));
  const events = readFileSync(join(dir, "events.jsonl"), "utf8")
    .split("\n")
    .filter((line) => line.length > 0)
    .map((line) => JSON.parse(line) as EventRecord);
  return { initial, events, final };
}

describe.each(["fire_drill", "partition_heal", "alarm_revoke"])(
  "recorded scenario %s",
  (name) => {
    it("replays to the engine's final snapshot", () => {
      const { initial, events, final } = load(name);
      expect(events.length).toBeGreaterThan(50);
      const replayed = reduceAll(initial, events);
      expect(replayed).toEqual(final);
    });

    it("replays deterministically", () => {
      const { initial, events } = load(name);
      const a = reduceAll(initial, events);
      const b = reduceAll(initial, events);
      expect(a).toEqual(b);
    });

    it("never mutates the previous view in place", () => {
      const { initial, events } = load(name);
      const before = JSON.parse(JSON.stringify(initial));
      let view = initial;
      for (const ev of events.slice(0, 500)) {
        view = reduceEvent(view, ev).snapshot;
      }
      expect(initial).toEqual(before);
    });
  },
);
