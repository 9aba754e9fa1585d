import { describe, expect, it } from "vitest";

import { Store, deriveGateDecision } from "../src/state.js";
import type { TurnTerminal } from "../src/types.js";
import { belief, turn } from "./helpers.js";

function terminal(overrides: Partial<TurnTerminal> = {}): TurnTerminal {
  return {
    turn: turn({ turn_id: 1, role: "AGENT", text: "hello there", belief_version_used: 0, latency_ms: 9 }),
    gate_decision: "PROCEED",
    talker_outcome: "GENERATED",
    job_id: "job-s1-1",
    version_at_start: 0,
    latest_at_emission: 0,
    ...overrides,
  };
}

describe("store", () => {
  it("streams a turn from chunks to terminal", () => {
    const store = new Store();
    store.setSession("s1", belief());
    store.beginUserTurn("hi");
    expect(store.state.messages).toHaveLength(2);
    expect(store.state.messages[1].streaming).toBe(true);

    store.appendChunk("hello ");
    store.appendChunk("there");
    expect(store.state.messages[1].text).toBe("hello there");

    store.finishTurn(terminal());
    const agent = store.state.messages[1];
    expect(agent.streaming).toBe(false);
    expect(agent.turnId).toBe(1);
    expect(agent.beliefVersionUsed).toBe(0);
    expect(agent.gateDecision).toBe("PROCEED");
    expect(store.state.messages[0].turnId).toBe(0); // user turn id backfilled
  });

  it("pulses staleness after a proceed turn until the commit lands", () => {
    const store = new Store();
    store.setSession("s1", belief());
    store.beginUserTurn("hi");
    store.finishTurn(terminal());
    expect(store.state.stale).toBe(true); // reply used v0, commit pending

    store.applyServerEvent("belief_committed", {
      version: 1,
      belief: belief({ version: 1, produced_by: "REASONER", produced_at_turn: 0 }),
    });
    expect(store.state.stale).toBe(false);
    expect(store.state.belief?.version).toBe(1);
    expect(store.state.beliefLog.map((b) => b.version)).toEqual([0, 1]);
  });

  it("does not mark wait turns stale", () => {
    const store = new Store();
    store.setSession("s1", belief({ version: 1, coaching_phase: "PLANNING" }));
    store.beginUserTurn("walk me through it");
    store.applyServerEvent("belief_committed", {
      version: 2,
      belief: belief({ version: 2, coaching_phase: "PLANNING", produced_at_turn: 0 }),
    });
    store.finishTurn(
      terminal({
        turn: turn({ turn_id: 1, role: "AGENT", text: "plan", belief_version_used: 2 }),
        gate_decision: "WAIT",
        talker_outcome: "RELAYED",
      }),
    );
    expect(store.state.stale).toBe(false);
  });

  it("deduplicates feed turns against locally sent ones", () => {
    const store = new Store();
    store.setSession("s1", belief());
    store.beginUserTurn("hi");
    store.applyServerEvent("turn_appended", turn({ turn_id: 0, role: "USER", text: "hi" }));
    store.finishTurn(terminal());
    store.applyServerEvent(
      "turn_appended",
      turn({ turn_id: 1, role: "AGENT", text: "hello there", belief_version_used: 0 }),
    );
    expect(store.state.messages).toHaveLength(2);
  });

  it("tracks job status updates", () => {
    const store = new Store();
    store.applyServerEvent("job_update", { job_id: "job-1", status: "RUNNING" });
    store.applyServerEvent("job_update", { job_id: "job-1", status: "COMPLETED", wall_ms: 42 });
    expect(store.state.jobs).toEqual([{ jobId: "job-1", status: "COMPLETED", wallMs: 42 }]);
  });

  it("hydrates an equivalent state from GET payloads", () => {
    const live = new Store();
    live.setSession("s1", belief());
    live.beginUserTurn("hi");
    live.applyServerEvent("belief_committed", {
      version: 1,
      belief: belief({ version: 1, produced_by: "REASONER", produced_at_turn: 0 }),
    });
    live.finishTurn(terminal());

    const reloaded = new Store();
    reloaded.hydrate(
      {
        session_id: "s1",
        belief: belief({ version: 1, produced_by: "REASONER", produced_at_turn: 0 }),
        beliefs: [belief(), belief({ version: 1, produced_by: "REASONER", produced_at_turn: 0 })],
        plan: null,
        history: [
          turn({ turn_id: 0, role: "USER", text: "hi" }),
          turn({ turn_id: 1, role: "AGENT", text: "hello there", belief_version_used: 0, latency_ms: 9 }),
        ],
      },
      [{ job_id: "job-s1-1", status: "COMPLETED", started_at_turn: 0, wall_ms: 50, committed_version: 1 }],
    );

    expect(reloaded.state.messages).toEqual(live.state.messages);
    expect(reloaded.state.belief).toEqual(live.state.belief);
    expect(reloaded.state.beliefLog).toEqual(live.state.beliefLog);
    expect(reloaded.state.stale).toBe(live.state.stale);
  });
});

describe("deriveGateDecision", () => {
  const log = [
    belief(),
    belief({ version: 1, produced_by: "REASONER", produced_at_turn: 0 }),
    belief({ version: 2, produced_by: "REASONER", produced_at_turn: 2, coaching_phase: "PLANNING" }),
  ];

  it("derives PROCEED for replies from an older snapshot", () => {
    const reply = turn({ turn_id: 1, role: "AGENT", belief_version_used: 0 });
    expect(deriveGateDecision(reply, log)).toBe("PROCEED");
  });

  it("derives WAIT for replies using the version their own turn produced", () => {
    const reply = turn({ turn_id: 3, role: "AGENT", belief_version_used: 2 });
    expect(deriveGateDecision(reply, log)).toBe("WAIT");
  });
});
