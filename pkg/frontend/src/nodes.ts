// Node-label ordering shared with the server: nodes sort by (kind word,
// index), links by (a, b, kind). Keeping the comparators identical is what
// lets a replayed event log reproduce the snapshot arrays byte for byte.

import type { LinkView } from "./types.js";

export function nodeSortKey(label: string): [string, number] {
  if (label === "center") return ["center", 0];
  const sep = label.indexOf(":");
  if (sep < 0) return [label, 0];
  return [label.slice(0, sep), Number(label.slice(sep + 1))];
}

export function compareNodes(a: string, b: string): number {
  const [ka, ia] = nodeSortKey(a);
  const [kb, ib] = nodeSortKey(b);
  if (ka !== kb) return ka < kb ? -1 : 1;
  return ia - ib;
}

export function compareLinks(a: LinkView, b: LinkView): number {
  return (
    compareNodes(a.a, b.a) ||
    compareNodes(a.b, b.b) ||
    (a.kind < b.kind ? -1 : a.kind > b.kind ? 1 : 0)
  );
}

export function linkKey(a: string, b: string, kind: string): string {
  return `${a}|${b}|${kind}`;
}
