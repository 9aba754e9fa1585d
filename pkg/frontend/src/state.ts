// The single client-side store. Everything here derives from API
// payloads and feed events, so a page reload can rebuild an identical
// state from the GET endpoints alone.

import { BeliefDiff, diffBeliefs } from "./diff.js";
import type {
  Belief,
  GateDecision,
  JobSummary,
  Plan,
  SessionState,
  TurnRecord,
  TurnTerminal,
} from "./types.js";

export interface ChatMessage {
  turnId: number | null;
  role: "USER" | "AGENT";
  text: string;
  streaming: boolean;
  beliefVersionUsed: number | null;
  latencyMs: number | null;
  degraded: boolean;
  gateDecision: GateDecision | null;
}

export interface JobInfo {
  jobId: string;
  status: string;
  wallMs: number | null;
}

export type ConnectionStatus = "connecting" | "connected" | "reconnecting" | "stopped";

export interface AppState {
  sessionId: string | null;
  connection: ConnectionStatus;
  messages: ChatMessage[];
  belief: Belief | null;
  beliefLog: Belief[];
  beliefDiff: BeliefDiff | null;
  plan: Plan | null;
  jobs: JobInfo[];
  stale: boolean;
}

export function initialState(): AppState {
  return {
    sessionId: null,
    connection: "connecting",
    messages: [],
    belief: null,
    beliefLog: [],
    beliefDiff: null,
    plan: null,
    jobs: [],
    stale: false,
  };
}

/**
 * Reconstruct a turn's gate badge from persisted data alone: an agent turn
 * waited exactly when the belief version it used was produced by its own
 * turn's reasoning job (the job triggered by the preceding user turn).
 */
export function deriveGateDecision(turn: TurnRecord, beliefs: Belief[]): GateDecision {
  const used = beliefs.find((b) => b.version === turn.belief_version_used);
  if (used && used.produced_at_turn === turn.turn_id - 1) return "WAIT";
  return "PROCEED";
}

function recomputeStale(state: AppState): void {
  const lastAgent = [...state.messages].reverse().find((m) => m.role === "AGENT" && !m.streaming);
  if (!lastAgent || lastAgent.gateDecision !== "PROCEED" || lastAgent.beliefVersionUsed === null) {
    state.stale = false;
    return;
  }
  const latest = state.belief?.version ?? 0;
  state.stale = latest <= lastAgent.beliefVersionUsed;
}

export class Store {
  state: AppState = initialState();
  private listeners: Array<(state: AppState) => void> = [];

  subscribe(listener: (state: AppState) => void): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private notify(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  setSession(sessionId: string, belief: Belief): void {
    this.state.sessionId = sessionId;
    this.state.belief = belief;
    this.state.beliefLog = [belief];
    this.notify();
  }

  setConnection(status: ConnectionStatus): void {
    this.state.connection = status;
    this.notify();
  }

  beginUserTurn(text: string): void {
    this.state.messages.push({
      turnId: null,
      role: "USER",
      text,
      streaming: false,
      beliefVersionUsed: null,
      latencyMs: null,
      degraded: false,
      gateDecision: null,
    });
    this.state.messages.push({
      turnId: null,
      role: "AGENT",
      text: "",
      streaming: true,
      beliefVersionUsed: null,
      latencyMs: null,
      degraded: false,
      gateDecision: null,
    });
    this.notify();
  }

  appendChunk(chunk: string): void {
    const current = this.state.messages[this.state.messages.length - 1];
    if (current && current.streaming) {
      current.text += chunk;
      this.notify();
    }
  }

  finishTurn(terminal: TurnTerminal): void {
    const current = this.state.messages[this.state.messages.length - 1];
    if (current && current.streaming) {
      current.streaming = false;
      current.text = terminal.turn.text;
      current.turnId = terminal.turn.turn_id;
      current.beliefVersionUsed = terminal.turn.belief_version_used;
      current.latencyMs = terminal.turn.latency_ms;
      current.degraded = terminal.turn.degraded;
      current.gateDecision = terminal.gate_decision;
      const user = this.state.messages[this.state.messages.length - 2];
      if (user && user.role === "USER" && user.turnId === null) {
        user.turnId = terminal.turn.turn_id - 1;
      }
    }
    recomputeStale(this.state);
    this.notify();
  }

  failTurn(message: string): void {
    const current = this.state.messages[this.state.messages.length - 1];
    if (current && current.streaming) {
      current.streaming = false;
      current.degraded = true;
      current.text = current.text || message;
    }
    this.notify();
  }

  applyServerEvent(type: string, data: unknown): void {
    if (type === "belief_committed") {
      const payload = data as { version: number; belief: Belief };
      this.state.beliefDiff = diffBeliefs(this.state.belief, payload.belief);
      this.state.belief = payload.belief;
      this.state.beliefLog.push(payload.belief);
      recomputeStale(this.state);
    } else if (type === "plan_updated") {
      this.state.plan = data as Plan;
    } else if (type === "job_update") {
      const payload = data as { job_id: string; status: string; wall_ms?: number };
      const existing = this.state.jobs.find((j) => j.jobId === payload.job_id);
      if (existing) {
        existing.status = payload.status;
        existing.wallMs = payload.wall_ms ?? existing.wallMs;
      } else {
        this.state.jobs.push({
          jobId: payload.job_id,
          status: payload.status,
          wallMs: payload.wall_ms ?? null,
        });
      }
    } else if (type === "turn_appended") {
      this.absorbTurn(data as TurnRecord);
    }
    this.notify();
  }

  /** Fold in a turn seen on the feed without duplicating locally sent ones. */
  private absorbTurn(turn: TurnRecord): void {
    if (this.state.messages.some((m) => m.turnId === turn.turn_id)) return;
    const pending = this.state.messages.find(
      (m) => m.turnId === null && m.role === turn.role && (m.streaming || m.text === turn.text),
    );
    if (pending) {
      pending.turnId = turn.turn_id;
      return;
    }
    this.state.messages.push({
      turnId: turn.turn_id,
      role: turn.role,
      text: turn.text,
      streaming: false,
      beliefVersionUsed: turn.belief_version_used,
      latencyMs: turn.latency_ms,
      degraded: turn.degraded,
      gateDecision:
        turn.role === "AGENT" ? deriveGateDecision(turn, this.state.beliefLog) : null,
    });
  }

  /** Rebuild the whole view from GET payloads, as a page reload does. */
  hydrate(session: SessionState, jobs: JobSummary[]): void {
    this.state.sessionId = session.session_id;
    this.state.belief = session.belief;
    this.state.beliefLog = session.beliefs;
    this.state.plan = session.plan;
    const log = session.beliefs;
    this.state.beliefDiff =
      log.length >= 2 ? diffBeliefs(log[log.length - 2], log[log.length - 1]) : null;
    this.state.messages = session.history.map((turn) => ({
      turnId: turn.turn_id,
      role: turn.role,
      text: turn.text,
      streaming: false,
      beliefVersionUsed: turn.belief_version_used,
      latencyMs: turn.latency_ms,
      degraded: turn.degraded,
      gateDecision: turn.role === "AGENT" ? deriveGateDecision(turn, log) : null,
    }));
    this.state.jobs = jobs.map((job) => ({
      jobId: job.job_id,
      status: job.status,
      wallMs: job.wall_ms,
    }));
    recomputeStale(this.state);
    this.notify();
  }
}
