// DOM rendering for the three panels. Functions take a container and the
// store state and rebuild the panel; all element creation goes through the
// container's document so the same code runs under a test DOM.

import type { AppState, ChatMessage } from "./state.js";
import type { Belief, ReasoningTrace } from "./types.js";

function el(
  container: Element,
  tag: string,
  className?: string,
  text?: string,
): HTMLElement {
  const node = container.ownerDocument.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  container.appendChild(node);
  return node;
}

function badgeFor(message: ChatMessage): { symbol: string; title: string } | null {
  if (message.role !== "AGENT" || message.gateDecision === null) return null;
  if (message.gateDecision === "WAIT") return { symbol: "⏳", title: "waited for the reasoner" };
  return { symbol: "⚡", title: "answered from the snapshot" };
}

export function renderChat(container: Element, state: AppState): void {
  container.innerHTML = "";
  for (const message of state.messages) {
    const row = el(container, "article", `msg ${message.role.toLowerCase()}`);
    const meta = el(row, "header", "msg-meta");
    el(meta, "span", "msg-role", message.role === "USER" ? "you" : "coach");
    const badge = badgeFor(message);
    if (badge) {
      const badgeEl = el(meta, "span", `badge gate-${message.gateDecision!.toLowerCase()}`, badge.symbol);
      badgeEl.title = badge.title;
    }
    if (message.beliefVersionUsed !== null) {
      el(meta, "span", "version", `v${message.beliefVersionUsed}`);
    }
    if (message.degraded) el(meta, "span", "degraded", "degraded");
    if (message.streaming) row.classList.add("streaming");
    el(row, "p", "msg-text", message.text);
  }
}

const SCALAR_ROWS: Array<[keyof Belief, string]> = [
  ["journey_title", "journey"],
  ["primary_concern", "primary concern"],
  ["coaching_phase", "phase"],
  ["plan_ref", "plan"],
];
const LIST_ROWS: Array<[keyof Belief, string]> = [
  ["barriers", "barriers"],
  ["goals", "goals"],
  ["recommendations", "recommendations"],
];

export function renderBeliefPanel(container: Element, state: AppState): void {
  container.innerHTML = "";
  const belief = state.belief;
  if (!belief) {
    el(container, "p", "muted", "no session yet");
    return;
  }
  const head = el(container, "header", "belief-head");
  el(head, "span", "belief-version", `v${belief.version ?? "?"}`);
  if (state.stale) {
    el(head, "span", "stale-indicator pulsing", "belief update in flight");
  }

  const dl = el(container, "dl", "belief-fields");
  for (const [field, label] of SCALAR_ROWS) {
    const changed = state.beliefDiff?.[field]?.changed ?? false;
    el(dl, "dt", changed ? "field-label changed" : "field-label", label);
    el(dl, "dd", changed ? "field-value changed" : "field-value", String(belief[field] ?? "~"));
  }
  for (const [field, label] of LIST_ROWS) {
    const diff = state.beliefDiff?.[field];
    el(dl, "dt", diff?.changed ? "field-label changed" : "field-label", label);
    const dd = el(dl, "dd", "field-value");
    const items = belief[field] as string[];
    if (items.length === 0) el(dd, "span", "muted", "none");
    const list = el(dd, "ul", "belief-list");
    for (const item of items) {
      const added = diff?.added.includes(item) ?? false;
      el(list, "li", added ? "added" : "", item);
    }
  }

  if (state.beliefLog.length > 1) {
    el(container, "p", "belief-history", `${state.beliefLog.length} versions committed`);
  }
}

export function renderPlanPanel(container: Element, state: AppState): void {
  container.innerHTML = "";
  if (!state.plan) {
    el(container, "p", "muted", "no plan yet");
    return;
  }
  el(container, "header", "plan-head", `plan revision ${state.plan.revision}`);
  const list = el(container, "ol", "plan-steps");
  for (const step of state.plan.steps) {
    const item = el(list, "li", "plan-step");
    el(item, "strong", "plan-step-title", step.title);
    if (step.description) el(item, "p", "plan-step-desc", step.description);
    if (step.resources.length > 0) {
      const resources = el(item, "ul", "plan-resources");
      for (const resource of step.resources) {
        const row = el(resources, "li", "plan-resource");
        const link = el(row, "a", "resource-link", resource.title) as HTMLAnchorElement;
        link.href = resource.uri;
        if (resource.reasoning) el(row, "p", "resource-why", resource.reasoning);
      }
    }
  }
}

export function renderTracePanel(
  container: Element,
  state: AppState,
  traces: Map<string, ReasoningTrace>,
): void {
  container.innerHTML = "";
  if (state.jobs.length === 0) {
    el(container, "p", "muted", "no reasoning runs yet");
    return;
  }
  const list = el(container, "ul", "trace-jobs");
  for (const job of state.jobs) {
    const item = el(list, "li", `trace-job status-${job.status.toLowerCase()}`);
    const head = el(item, "header", "trace-job-head");
    el(head, "span", "trace-job-id", job.jobId);
    el(head, "span", "trace-job-status", job.status.toLowerCase());
    if (job.wallMs !== null) el(head, "span", "trace-job-wall", `${Math.round(job.wallMs)} ms`);
    const trace = traces.get(job.jobId);
    if (!trace) continue;
    const timeline = el(item, "ol", "trace-steps");
    for (const step of trace.steps) {
      const action = step.action;
      if (action.kind === "THOUGHT") {
        el(timeline, "li", "step thought", `think: ${action.thought ?? ""}`);
      } else if (action.kind === "TOOL_CALL") {
        const call = action.tool_call!;
        el(timeline, "li", "step act", `act: ${call.tool_name}`);
        if (step.observation) {
          el(timeline, "li", "step observe", `observe: ${truncate(step.observation.content)}`);
        }
      } else if (action.kind === "BELIEF_EXTRACTION") {
        el(timeline, "li", "step extract", "extract: belief document");
      } else {
        el(timeline, "li", "step say", `say: ${action.utterance ?? ""}`);
      }
    }
  }
}

function truncate(text: string, limit = 80): string {
  return text.length <= limit ? text : text.slice(0, limit - 1) + "…";
}

export function renderConnection(container: Element, state: AppState): void {
  container.textContent = state.connection;
  container.className = `connection ${state.connection}`;
}
