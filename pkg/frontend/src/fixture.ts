/** Fixture engine: a tiny node HTTP server that replays recorded history
 * events through the same endpoints and wire shapes as the real control API.
 * Posted meta updates are staged and only take effect ("apply") when the
 * replay crosses the next iteration boundary, mirroring engine semantics.
 */
import * as http from "node:http";
import { AddressInfo } from "node:net";
import { validateMeta } from "./form.js";
import { ArchitectureDoc, HistoryEvent, MetaParams, StatusSnapshot } from "./types.js";

export interface FixtureOptions {
  events: HistoryEvent[];
  architecture: ArchitectureDoc;
  meta: MetaParams;
  tickMs?: number;
  initialReleased?: number;
}

export interface FixtureServer {
  url: string;
  port: number;
  released(): number;
  applied(): MetaParams;
  close(): Promise<void>;
}

export function startFixture(options: FixtureOptions): Promise<FixtureServer> {
  const events = options.events;
  const tickMs = options.tickMs ?? 25;
  let released = options.initialReleased ?? 0;
  let applied: MetaParams = { ...options.meta };
  let staged: MetaParams | null = null;
  const listeners = new Set<http.ServerResponse>();

  const sendEvent = (doc: unknown) => {
    for (const res of listeners) {
      res.write(`data: ${JSON.stringify(doc)}\n\n`);
    }
  };

  const timer = setInterval(() => {
    if (released >= events.length) {
      clearInterval(timer);
      if (staged) {
        applied = staged; // final boundary: the run is over
        staged = null;
      }
      for (const res of listeners) res.end();
      listeners.clear();
      return;
    }
    const event = events[released];
    const previous = released > 0 ? events[released - 1] : null;
    released += 1;
    if (previous && event.iteration !== previous.iteration) {
      if (staged) {
        applied = staged;
        staged = null;
      }
      sendEvent({ type: "phase", phase: "grow", iteration: event.iteration,
                  epoch: event.epoch });
    }
    sendEvent({ type: "history", ...event });
  }, tickMs);

  const status = (): StatusSnapshot => {
    const last = released > 0 ? events[released - 1] : null;
    return {
      iteration: last ? last.iteration : 0,
      epoch: last ? last.epoch : 0,
      phase: released < events.length ? (last ? last.phase : "grow") : "stopped",
      param_count: last ? last.param_count : 0,
      depth: last ? last.depth : 0,
      meta: applied,
      train_loss: last ? last.train_loss : null,
      train_acc: last ? last.train_acc : null,
      test_loss: last ? last.test_loss : null,
      test_acc: last ? last.test_acc : null,
      fitted_a: null,
      running: released < events.length,
    };
  };

  const server = http.createServer((req, res) => {
    const url = new URL(req.url ?? "/", "http://fixture");
    const json = (code: number, body: unknown) => {
      res.writeHead(code, { "content-type": "application/json" });
      res.end(JSON.stringify(body));
    };
    if (req.method === "GET" && url.pathname === "/status") {
      return json(200, status());
    }
    if (req.method === "GET" && url.pathname === "/architecture") {
      return json(200, options.architecture);
    }
    if (req.method === "GET" && url.pathname === "/history") {
      const since = Number(url.searchParams.get("since") ?? "0");
      return json(200, events.slice(0, released).filter((e) => e.epoch > since));
    }
    if (req.method === "POST" && url.pathname === "/meta") {
      let body = "";
      req.on("data", (chunk) => (body += chunk));
      req.on("end", () => {
        let update: Partial<MetaParams>;
        try {
          update = JSON.parse(body || "{}");
        } catch {
          return json(400, { detail: { body: "invalid json" } });
        }
        const problems = validateMeta(update);
        if (Object.keys(problems).length > 0) {
          return json(400, { detail: problems });
        }
        staged = { ...(staged ?? applied), ...update };
        return json(200, staged);
      });
      return;
    }
    if (req.method === "GET" && url.pathname === "/events") {
      res.writeHead(200, {
        "content-type": "text/event-stream",
        "cache-control": "no-cache",
      });
      const last = released > 0 ? events[released - 1].epoch : 0;
      res.write(`data: ${JSON.stringify({ type: "hello", cursor: last })}\n\n`);
      if (released >= events.length) {
        res.end();
        return;
      }
      listeners.add(res);
      req.on("close", () => listeners.delete(res));
      return;
    }
    json(404, { detail: "not found" });
  });

  return new Promise((resolve) => {
    server.listen(0, "127.0.0.1", () => {
      const port = (server.address() as AddressInfo).port;
      resolve({
        url: `http://127.0.0.1:${port}`,
        port,
        released: () => released,
        applied: () => applied,
        close: () =>
          new Promise<void>((done) => {
            clearInterval(timer);
            for (const res of listeners) res.end();
            listeners.clear();
            server.close(() => done());
          }),
      });
    });
  });
}
