// Gateway client. All mutations go through the documented endpoints; the
// event stream is read over fetch so the same code runs in the browser
// and under node tests, reconnecting with resume-from-sequence.

import type { PortalConfig } from "./config.js";
import type {
  RequestRecordPayload,
  StatusPayload,
  SubmitResponse,
  TopologyPayload,
  TraceRecord,
} from "./types.js";
import { TERMINAL_STATES } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

async function jsonOrError(resp: Response): Promise<any> {
  const body = await resp.json().catch(() => ({}));
  if (!resp.ok) {
    throw new ApiError(resp.status, body.error ?? resp.statusText);
  }
  return body;
}

export class ApiClient {
  constructor(private config: PortalConfig) {}

  private url(path: string): string {
    return `${this.config.baseUrl}${path}`;
  }

  async submitRequest(payload: Record<string, unknown>): Promise<SubmitResponse> {
    const headers: Record<string, string> = {
      "Content-Type": "application/json",
    };
    if (this.config.token) {
      headers["Authorization"] = `Bearer ${this.config.token}`;
    }
    const resp = await fetch(this.url("/api/v1/requests"), {
      method: "POST",
      headers,
      body: JSON.stringify(payload),
    });
    return jsonOrError(resp);
  }

  async getRequest(id: string): Promise<RequestRecordPayload> {
    return jsonOrError(await fetch(this.url(`/api/v1/requests/${id}`)));
  }

  async getTopology(): Promise<TopologyPayload> {
    return jsonOrError(await fetch(this.url("/api/v1/topology")));
  }

  async getStatus(): Promise<StatusPayload> {
    return jsonOrError(await fetch(this.url("/api/v1/status")));
  }

  async getResult(id: string): Promise<Record<string, unknown>> {
    return jsonOrError(await fetch(this.url(`/api/v1/results/${id}`)));
  }

  /**
   * Async iterator over the request's trace records: full replay first,
   * then live follow. Ends when the record reaches a terminal state.
   * Dropped connections resume from the last seen sequence number.
   */
  async *events(
    id: string,
    opts: { fromSeq?: number; signal?: AbortSignal } = {},
  ): AsyncGenerator<TraceRecord> {
    let last = opts.fromSeq ?? -1;
    for (;;) {
      const suffix = last >= 0 ? `?from=${last}` : "";
      let resp: Response;
      try {
        resp = await fetch(this.url(`/api/v1/requests/${id}/events${suffix}`), {
          signal: opts.signal,
        });
      } catch (err) {
        if (opts.signal?.aborted) return;
        await new Promise((r) => setTimeout(r, 500));
        continue; // transient network failure: reconnect and resume
      }
      if (resp.status === 404) throw new ApiError(404, `no request ${id}`);
      if (!resp.ok || !resp.body) {
        await new Promise((r) => setTimeout(r, 500));
        continue;
      }
      const reader = resp.body.getReader();
      const decoder = new TextDecoder();
      let buffer = "";
      let sawTerminal = false;
      for (;;) {
        let chunk: ReadableStreamReadResult<Uint8Array>;
        try {
          chunk = await reader.read();
        } catch {
          break; // connection dropped mid-stream
        }
        if (chunk.done) break;
        buffer += decoder.decode(chunk.value, { stream: true });
        for (;;) {
          const cut = buffer.indexOf("\n\n");
          if (cut < 0) break;
          const frame = buffer.slice(0, cut);
          buffer = buffer.slice(cut + 2);
          const record = parseSseFrame(frame);
          if (!record) continue;
          last = record.seq;
          yield record;
          if (
            record.kind === "state" &&
            TERMINAL_STATES.has(String(record.payload["state"]))
          ) {
            sawTerminal = true;
          }
        }
        if (sawTerminal) break;
      }
      if (sawTerminal || opts.signal?.aborted) return;
      // Stream ended without a terminal state: reconnect and resume.
      await new Promise((r) => setTimeout(r, 300));
    }
  }
}

export function parseSseFrame(frame: string): TraceRecord | null {
  let data = "";
  for (const line of frame.split("\n")) {
    if (line.startsWith("data: ")) data += line.slice(6);
  }
  if (!data) return null;
  try {
    return JSON.parse(data) as TraceRecord;
  } catch {
    return null;
  }
}
