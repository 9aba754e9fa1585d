import type { Belief, TurnRecord } from "../src/types.js";

export function belief(overrides: Partial<Belief> = {}): Belief {
  return {
    version: 0,
    session_id: "s1",
    journey_title: "Sleeping Coaching",
    primary_concern: null,
    barriers: [],
    goals: [],
    recommendations: [],
    coaching_phase: "UNDERSTANDING",
    plan_ref: null,
    produced_by: "BOOTSTRAP",
    produced_at_turn: -1,
    ...overrides,
  };
}

export function turn(overrides: Partial<TurnRecord> = {}): TurnRecord {
  return {
    turn_id: 0,
    role: "USER",
    text: "hello",
    timestamp: 0,
    belief_version_used: null,
    latency_ms: null,
    degraded: false,
    ...overrides,
  };
}

export function streamOf(...chunks: string[]): ReadableStream<Uint8Array> {
  const encoder = new TextEncoder();
  return new ReadableStream({
    start(controller) {
      for (const chunk of chunks) controller.enqueue(encoder.encode(chunk));
      controller.close();
    },
  });
}

export async function waitFor(
  condition: () => boolean,
  timeoutMs = 5_000,
  label = "condition",
): Promise<number> {
  const started = Date.now();
  while (!condition()) {
    if (Date.now() - started > timeoutMs) throw new Error(`timed out waiting for ${label}`);
    await new Promise((resolve) => setTimeout(resolve, 10));
  }
  return Date.now() - started;
}
