// Wire types mirroring the service's canonical JSON: snake_case fields,
// upper-case enum strings.

export type CoachingPhase = "UNDERSTANDING" | "GOAL_SETTING" | "PLANNING";
export type GateDecision = "PROCEED" | "WAIT";

export interface Belief {
  version: number | null;
  session_id: string;
  journey_title: string;
  primary_concern: string | null;
  barriers: string[];
  goals: string[];
  recommendations: string[];
  coaching_phase: CoachingPhase;
  plan_ref: string | null;
  produced_by: string;
  produced_at_turn: number;
}

export interface TurnRecord {
  turn_id: number;
  role: "USER" | "AGENT";
  text: string;
  timestamp: number;
  belief_version_used: number | null;
  latency_ms: number | null;
  degraded: boolean;
}

export interface ResourceRef {
  uri: string;
  title: string;
  source: string;
  reasoning: string;
}

export interface PlanStep {
  title: string;
  description: string;
  resources: ResourceRef[];
}

export interface Plan {
  plan_id: string;
  steps: PlanStep[];
  revision: number;
  derived_from_version: number;
}

export interface TraceObservation {
  source: "USER" | "TOOL";
  content: string;
  feedback_flag: boolean;
  turn_id: number;
}

export interface TraceAction {
  kind: "THOUGHT" | "TOOL_CALL" | "BELIEF_EXTRACTION" | "UTTERANCE";
  thought?: string;
  tool_call?: { tool_name: string; arguments: Record<string, string> };
  belief_extraction?: Belief;
  utterance?: string;
}

export interface TraceStep {
  action: TraceAction;
  observation: TraceObservation | null;
}

export interface ReasoningTrace {
  job_id: string;
  steps: TraceStep[];
  final_belief: Belief | null;
  final_plan: Plan | null;
  step_count: number;
  started_at_turn: number;
  status: "COMPLETED" | "SUPERSEDED" | "FAILED";
}

export interface JobSummary {
  job_id: string;
  status: string;
  started_at_turn: number;
  wall_ms: number | null;
  committed_version: number | null;
}

// terminal frame of POST /sessions/{id}/turns
export interface TurnTerminal {
  turn: TurnRecord;
  gate_decision: GateDecision;
  talker_outcome: "GENERATED" | "RELAYED" | "FALLBACK";
  job_id: string | null;
  version_at_start: number;
  latest_at_emission: number;
}

export interface SessionState {
  session_id: string;
  belief: Belief;
  beliefs: Belief[];
  plan: Plan | null;
  history: TurnRecord[];
}

export interface ServerEvent {
  id: number;
  type: string;
  data: unknown;
}
