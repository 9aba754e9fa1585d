// Boot: create or resume a session, hydrate from the GET endpoints, open
// the events feed, and wire the chat composer.

import { ApiClient } from "./api.js";
import { renderBeliefPanel, renderChat, renderConnection, renderPlanPanel, renderTracePanel } from "./render.js";
import { Store } from "./state.js";
import type { ReasoningTrace } from "./types.js";

const api = new ApiClient("");
const store = new Store();
const traces = new Map<string, ReasoningTrace>();

function must(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

async function resumeOrCreateSession(): Promise<string> {
  const fromUrl = new URLSearchParams(window.location.search).get("session");
  const stored = fromUrl ?? window.localStorage.getItem("tandem-session");
  if (stored) {
    try {
      const session = await api.getSession(stored);
      const jobs = await api.getJobs(stored);
      store.hydrate(session, jobs);
      await refreshTraces(stored);
      return stored;
    } catch {
      window.localStorage.removeItem("tandem-session");
    }
  }
  const created = await api.createSession();
  window.localStorage.setItem("tandem-session", created.session_id);
  store.setSession(created.session_id, created.belief);
  return created.session_id;
}

async function refreshTraces(sessionId: string): Promise<void> {
  for (const job of store.state.jobs) {
    if (traces.has(job.jobId)) continue;
    const payload = await api.getTrace(sessionId, job.jobId);
    if (payload.trace) traces.set(job.jobId, payload.trace);
  }
}

async function boot(): Promise<void> {
  const chatPane = must("chat");
  const beliefPane = must("belief-panel");
  const planPane = must("plan-panel");
  const tracePane = must("trace-panel");
  const connectionPill = must("connection");
  const input = must("composer-input") as HTMLInputElement;
  const send = must("composer-send") as HTMLButtonElement;

  store.subscribe((state) => {
    renderChat(chatPane, state);
    renderBeliefPanel(beliefPane, state);
    renderPlanPanel(planPane, state);
    renderTracePanel(tracePane, state, traces);
    renderConnection(connectionPill, state);
    chatPane.scrollTop = chatPane.scrollHeight;
    send.disabled = input.value.trim() === "" || state.messages.some((m) => m.streaming);
  });

  const sessionId = await resumeOrCreateSession();

  const feed = api.events(
    sessionId,
    (frame) => {
      if (!frame.event) return;
      store.applyServerEvent(frame.event, JSON.parse(frame.data));
      if (frame.event === "job_update") {
        void refreshTraces(sessionId).then(() => store.setConnection(store.state.connection));
      }
    },
    (status) => store.setConnection(status === "stopped" ? "reconnecting" : status),
  );
  void feed.start();

  input.addEventListener("input", () => {
    send.disabled = input.value.trim() === "" || store.state.messages.some((m) => m.streaming);
  });

  async function submit(): Promise<void> {
    const text = input.value.trim();
    if (!text || store.state.messages.some((m) => m.streaming)) return;
    input.value = "";
    send.disabled = true;
    store.beginUserTurn(text);
    const key = `${sessionId}-${Date.now()}-${Math.random().toString(36).slice(2, 8)}`;
    try {
      const terminal = await api.postTurn(sessionId, text, {
        idempotencyKey: key,
        onChunk: (chunk) => store.appendChunk(chunk),
      });
      store.finishTurn(terminal);
    } catch (error) {
      store.failTurn(`request failed: ${String(error)}`);
    }
  }

  send.addEventListener("click", () => void submit());
  input.addEventListener("keydown", (event) => {
    if (event.key === "Enter") void submit();
  });
}

void boot();
