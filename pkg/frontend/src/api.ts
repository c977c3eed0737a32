/** Fetch-based client for the control API. The event stream is parsed from a
 * streaming fetch rather than EventSource so the same code runs in the
 * browser and in node tests; reconnects backfill through /history using the
 * cursor from the stream's hello event.
 */
import { ArchitectureDoc, HistoryEvent, MetaParams, StatusSnapshot, StreamEvent } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, public detail: unknown) {
    super(`api error ${status}: ${JSON.stringify(detail)}`);
  }
}

async function getJson<T>(url: string): Promise<T> {
  const response = await fetch(url);
  if (!response.ok) {
    throw new ApiError(response.status, await response.text());
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(public baseUrl: string = "") {}

  getStatus(): Promise<StatusSnapshot> {
    return getJson(`${this.baseUrl}/status`);
  }

  getArchitecture(): Promise<ArchitectureDoc> {
    return getJson(`${this.baseUrl}/architecture`);
  }

  getHistory(since = 0): Promise<HistoryEvent[]> {
    return getJson(`${this.baseUrl}/history?since=${since}`);
  }

  async postMeta(update: Partial<MetaParams> & { stop?: boolean }): Promise<MetaParams> {
    const response = await fetch(`${this.baseUrl}/meta`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(update),
    });
    const body = await response.json();
    if (!response.ok) {
      throw new ApiError(response.status, (body as { detail?: unknown }).detail ?? body);
    }
    return body as MetaParams;
  }

  /** Consume the SSE stream until it ends or `signal` aborts. */
  async streamEvents(
    onEvent: (event: StreamEvent) => void,
    signal?: AbortSignal,
  ): Promise<void> {
    const response = await fetch(`${this.baseUrl}/events`, { signal });
    if (!response.ok || !response.body) {
      throw new ApiError(response.status, "event stream unavailable");
    }
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      let cut;
      while ((cut = buffer.indexOf("\n\n")) >= 0) {
        const frame = buffer.slice(0, cut);
        buffer = buffer.slice(cut + 2);
        for (const line of frame.split("\n")) {
          if (line.startsWith("data: ")) {
            onEvent(JSON.parse(line.slice(6)) as StreamEvent);
          }
        }
      }
    }
  }
}

export interface LiveFeed {
  stop(): void;
}

/** Keep a gap-free, ordered event history: backfill from /history, then
 * follow the live stream, re-backfilling across gaps and reconnects. */
export function followHistory(
  client: ApiClient,
  onHistory: (events: HistoryEvent[]) => void,
  onConnectionChange?: (up: boolean) => void,
  retryMs = 1000,
): LiveFeed {
  const byEpoch = new Map<number, HistoryEvent>();
  let stopped = false;
  const controller = { current: new AbortController() };

  const publish = () => {
    const events = [...byEpoch.values()].sort((a, b) => a.epoch - b.epoch);
    onHistory(events);
  };
  const backfill = async (since: number) => {
    for (const event of await client.getHistory(since)) {
      byEpoch.set(event.epoch, event);
    }
    publish();
  };

  const loop = async () => {
    while (!stopped) {
      try {
        controller.current = new AbortController();
        await client.streamEvents(async (event) => {
          if (event.type === "hello") {
            await backfill(0);
            onConnectionChange?.(true);
          } else if (event.type === "gap") {
            const latest = Math.max(0, ...byEpoch.keys());
            await backfill(latest);
          } else if (event.type === "history") {
            const { type, ...history } = event;
            byEpoch.set(history.epoch, history as HistoryEvent);
            publish();
          }
        }, controller.current.signal);
        onConnectionChange?.(false);
      } catch {
        onConnectionChange?.(false);
      }
      if (!stopped) {
        await new Promise((resolve) => setTimeout(resolve, retryMs));
      }
    }
  };
  void loop();

  return {
    stop() {
      stopped = true;
      controller.current.abort();
    },
  };
}
