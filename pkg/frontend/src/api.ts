// Typed client for the coaching service. The UI is a pure client: all of
// its state derives from these endpoints and the events feed.

import { parseSse, EventFeed, FeedStatus, SseFrame } from "./sse.js";
import type {
  Belief,
  JobSummary,
  Plan,
  ReasoningTrace,
  SessionState,
  TurnTerminal,
} from "./types.js";

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

async function expectJson<T>(response: Response): Promise<T> {
  if (!response.ok) throw new ApiError(response.status, await response.text());
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(private readonly baseUrl: string = "") {}

  private url(path: string): string {
    return this.baseUrl + path;
  }

  async createSession(): Promise<{ session_id: string; belief: Belief }> {
    return expectJson(await fetch(this.url("/sessions"), { method: "POST" }));
  }

  async getSession(sessionId: string): Promise<SessionState> {
    return expectJson(await fetch(this.url(`/sessions/${sessionId}`)));
  }

  async getBelief(sessionId: string): Promise<Belief> {
    return expectJson(await fetch(this.url(`/sessions/${sessionId}/belief`)));
  }

  async getBeliefs(sessionId: string): Promise<Belief[]> {
    return expectJson(await fetch(this.url(`/sessions/${sessionId}/beliefs`)));
  }

  async getPlan(sessionId: string): Promise<Plan | null> {
    const response = await fetch(this.url(`/sessions/${sessionId}/plan`));
    if (response.status === 404) return null;
    return expectJson(response);
  }

  async getJobs(sessionId: string): Promise<JobSummary[]> {
    return expectJson(await fetch(this.url(`/sessions/${sessionId}/jobs`)));
  }

  async getTrace(
    sessionId: string,
    jobId: string,
  ): Promise<{ job_id: string; status: string; trace: ReasoningTrace | null }> {
    return expectJson(await fetch(this.url(`/sessions/${sessionId}/traces/${jobId}`)));
  }

  /**
   * Send a turn and stream the reply. Chunks arrive through `onChunk` as
   * they generate; resolves with the terminal frame. The idempotency key
   * makes a retried send safe: the server rejects the duplicate.
   */
  async postTurn(
    sessionId: string,
    text: string,
    options: { idempotencyKey?: string; onChunk?: (text: string) => void } = {},
  ): Promise<TurnTerminal> {
    const body: Record<string, unknown> = { text };
    if (options.idempotencyKey) body.idempotency_key = options.idempotencyKey;
    const response = await fetch(this.url(`/sessions/${sessionId}/turns`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok || response.body === null) {
      throw new ApiError(response.status, await response.text());
    }
    let terminal: TurnTerminal | null = null;
    for await (const frame of parseSse(response.body)) {
      if (frame.event === "chunk") {
        const payload = JSON.parse(frame.data) as { text: string };
        options.onChunk?.(payload.text);
      } else if (frame.event === "turn") {
        terminal = JSON.parse(frame.data) as TurnTerminal;
      } else if (frame.event === "error") {
        throw new ApiError(500, frame.data);
      }
    }
    if (terminal === null) throw new ApiError(500, "stream ended without a terminal frame");
    return terminal;
  }

  events(
    sessionId: string,
    onFrame: (frame: SseFrame) => void,
    onStatus?: (status: FeedStatus) => void,
  ): EventFeed {
    return new EventFeed(this.url(`/sessions/${sessionId}/events`), onFrame, onStatus);
  }
}
