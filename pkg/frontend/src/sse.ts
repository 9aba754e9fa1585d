// Server-sent events over fetch: works identically in the browser and in
// node test runs, and gives us explicit control over Last-Event-ID resume.

export interface SseFrame {
  id: number | null;
  event: string | null;
  data: string;
}

/** Incrementally parse an SSE byte stream into frames. */
export async function* parseSse(
  stream: ReadableStream<Uint8Array>,
): AsyncGenerator<SseFrame> {
  const decoder = new TextDecoder();
  const reader = stream.getReader();
  let buffer = "";
  try {
    while (true) {
      const { done, value } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      let split;
      while ((split = buffer.indexOf("\n\n")) >= 0) {
        const block = buffer.slice(0, split);
        buffer = buffer.slice(split + 2);
        const frame = parseBlock(block);
        if (frame !== null) yield frame;
      }
    }
    const tail = parseBlock(buffer);
    if (tail !== null) yield tail;
  } finally {
    reader.releaseLock();
  }
}

function parseBlock(block: string): SseFrame | null {
  if (!block.trim() || block.startsWith(":")) return null; // comment / keep-alive
  let id: number | null = null;
  let event: string | null = null;
  const dataLines: string[] = [];
  for (const line of block.split("\n")) {
    if (line.startsWith("id:")) id = parseInt(line.slice(3).trim(), 10);
    else if (line.startsWith("event:")) event = line.slice(6).trim();
    else if (line.startsWith("data:")) dataLines.push(line.slice(5).trimStart());
  }
  if (event === null && dataLines.length === 0) return null;
  return { id, event, data: dataLines.join("\n") };
}

export type FeedStatus = "connecting" | "connected" | "reconnecting" | "stopped";

/**
 * Long-lived SSE subscription with automatic reconnect; resumes from the
 * last seen event id so nothing is lost across a dropped connection.
 */
export class EventFeed {
  lastEventId: number | null = null;
  private controller: AbortController | null = null;
  private stopped = false;

  constructor(
    private readonly url: string,
    private readonly onFrame: (frame: SseFrame) => void,
    private readonly onStatus: (status: FeedStatus) => void = () => {},
    private readonly retryDelayMs = 500,
  ) {}

  async start(): Promise<void> {
    this.stopped = false;
    while (!this.stopped) {
      this.controller = new AbortController();
      this.onStatus(this.lastEventId === null ? "connecting" : "reconnecting");
      try {
        const headers: Record<string, string> = { Accept: "text/event-stream" };
        if (this.lastEventId !== null) headers["Last-Event-ID"] = String(this.lastEventId);
        const response = await fetch(this.url, { headers, signal: this.controller.signal });
        if (!response.ok || response.body === null) throw new Error(`feed ${response.status}`);
        this.onStatus("connected");
        for await (const frame of parseSse(response.body)) {
          if (frame.id !== null) this.lastEventId = frame.id;
          this.onFrame(frame);
        }
      } catch (error) {
        if (this.stopped) break;
      }
      if (!this.stopped) {
        this.onStatus("reconnecting");
        await new Promise((resolve) => setTimeout(resolve, this.retryDelayMs));
      }
    }
    this.onStatus("stopped");
  }

  stop(): void {
    this.stopped = true;
    this.controller?.abort();
  }
}
