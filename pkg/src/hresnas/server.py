"""HTTP steering surface over a running search: read-only status,
architecture, and history endpoints, a meta-parameter update endpoint that
writes the same file the engine watches, and a server-sent event stream.

The handlers never touch the live network; they read snapshots the engine
produces and hand meta updates to the engine's atomic file writer.
"""
from __future__ import annotations

import json

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import HTMLResponse, StreamingResponse

from .engine import MetaValidationError, SearchEngine


def create_app(engine: SearchEngine, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="hresnas control api")

    def require_started() -> None:
        if not engine.started:
            raise HTTPException(status_code=503, detail="engine not started")

    @app.get("/status")
    def get_status():
        require_started()
        snapshot = engine.status()
        if snapshot is None:
            raise HTTPException(status_code=503, detail="engine not started")
        return snapshot

    @app.get("/architecture")
    def get_architecture():
        require_started()
        doc = engine.architecture()
        if doc is None:
            raise HTTPException(status_code=503, detail="engine not started")
        return doc

    @app.get("/history")
    def get_history(since: int = 0):
        return engine.history_since(since)

    @app.post("/meta")
    def post_meta(update: dict):
        try:
            return engine.submit_meta(update)
        except MetaValidationError as exc:
            raise HTTPException(status_code=400, detail=exc.problems)

    @app.get("/events")
    async def get_events(request: Request):
        require_started()
        sub = engine.subscribe()
        latest = engine.history_since(0)
        cursor = latest[-1]["epoch"] if latest else 0

        async def stream():
            import anyio

            try:
                yield _sse({"type": "hello", "cursor": cursor})
                while True:
                    if await request.is_disconnected():
                        break
                    event = await anyio.to_thread.run_sync(sub.get, 0.5)
                    if event is not None:
                        yield _sse(event)
                    elif engine.clean_stop:
                        break  # run is over and the queue has drained
            finally:
                engine.unsubscribe(sub)

        return StreamingResponse(stream(), media_type="text/event-stream")

    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    @app.get("/", response_class=HTMLResponse)
    def index():
        if ui_dir:
            return '<html><body><a href="/ui/">dashboard</a></body></html>'
        return "<html><body><h3>hresnas control api</h3><p>endpoints: " \
               "/status /architecture /history /meta /events</p></body></html>"

    return app


def _sse(event: dict) -> str:
    return f"data: {json.dumps(event)}\n\n"


def serve(engine: SearchEngine, host: str = "127.0.0.1", port: int = 8314,
          in_thread: bool = True, ui_dir: str | None = None):
    """Run uvicorn for the engine's app; returns the server object."""
    import threading

    import uvicorn

    server = uvicorn.Server(uvicorn.Config(
        create_app(engine, ui_dir=ui_dir), host=host, port=port,
        log_level="warning"))
    if in_thread:
        thread = threading.Thread(target=server.run, daemon=True)
        thread.start()
        return server
    server.run()
    return server
