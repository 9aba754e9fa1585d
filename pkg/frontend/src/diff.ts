// Field-level diff between two belief versions, powering the panel's
// change highlighting.

import type { Belief } from "./types.js";

export interface FieldDiff {
  changed: boolean;
  added: string[];
  removed: string[];
}

export type BeliefDiff = Record<string, FieldDiff>;

const SCALAR_FIELDS = ["journey_title", "primary_concern", "coaching_phase", "plan_ref"] as const;
const LIST_FIELDS = ["barriers", "goals", "recommendations"] as const;

export function diffBeliefs(previous: Belief | null, next: Belief): BeliefDiff {
  const diff: BeliefDiff = {};
  for (const field of SCALAR_FIELDS) {
    const before = previous ? previous[field] : null;
    diff[field] = { changed: before !== next[field], added: [], removed: [] };
  }
  for (const field of LIST_FIELDS) {
    const before = previous ? previous[field] : [];
    const after = next[field];
    const added = after.filter((item) => !before.includes(item));
    const removed = before.filter((item) => !after.includes(item));
    diff[field] = { changed: added.length > 0 || removed.length > 0, added, removed };
  }
  return diff;
}

export function changedFields(diff: BeliefDiff): string[] {
  return Object.keys(diff).filter((field) => diff[field].changed);
}
