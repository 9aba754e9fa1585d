"""Networked front door: session management, streaming chat, inspection.

Endpoints (all bodies canonical JSON):

    POST /sessions                     create a session, 201
    GET  /sessions/{id}                full session state
    POST /sessions/{id}/turns          handle a turn; server-sent events:
                                       `chunk` frames, then a terminal
                                       `turn` frame with the agent turn,
                                       gate decision, and job id
    GET  /sessions/{id}/belief         latest committed belief
    GET  /sessions/{id}/beliefs        every committed version
    GET  /sessions/{id}/plan           current plan, 404 until one exists
    GET  /sessions/{id}/traces/{job}   one reasoning trace
    GET  /sessions/{id}/events         live SSE feed of commits, plan
                                       updates, job status, and turns;
                                       supports Last-Event-ID resume

GET endpoints are pure views over memory state. Turn replays are rejected
with 409 via the idempotency key.

CLI:  python -m tandem.service --port 8712 --backend scripted \
          [--config cfg.yaml] [--fixtures-dir fixtures] [--ui-dir frontend/dist]
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
from contextlib import asynccontextmanager
from pathlib import Path
from typing import Any, AsyncIterator, Sequence

from fastapi import FastAPI, Header, HTTPException, Request
from fastapi.responses import JSONResponse, StreamingResponse

from .config import RuntimeConfig, load_config
from .memory import SessionNotFound
from .orchestrator import DuplicateTurn
from .runtime import CoachRuntime, build_runtime

log = logging.getLogger(__name__)


def _sse(data: dict[str, Any], event: str | None = None, event_id: int | None = None) -> str:
    frame = ""
    if event_id is not None:
        frame += f"id: {event_id}\n"
    if event is not None:
        frame += f"event: {event}\n"
    return frame + f"data: {json.dumps(data, ensure_ascii=False)}\n\n"


def create_app(runtime: CoachRuntime) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        await runtime.aclose()  # drain in-flight jobs on shutdown

    app = FastAPI(title="tandem", lifespan=lifespan)
    app.state.runtime = runtime

    def _require_session(session_id: str) -> None:
        if not runtime.memory.has_session(session_id):
            raise HTTPException(status_code=404, detail=f"no session {session_id!r}")

    @app.post("/sessions", status_code=201)
    async def create_session() -> dict[str, Any]:
        state = await runtime.create_session()
        return {"session_id": state.session_id, "belief": state.belief.to_dict()}

    @app.get("/sessions/{session_id}")
    async def get_session(session_id: str) -> dict[str, Any]:
        _require_session(session_id)
        state = await runtime.memory.get_state(session_id)
        return state.to_dict()

    @app.get("/sessions/{session_id}/belief")
    async def get_belief(session_id: str) -> dict[str, Any]:
        _require_session(session_id)
        snapshot = await runtime.memory.read_snapshot(session_id)
        return snapshot.belief.to_dict()

    @app.get("/sessions/{session_id}/beliefs")
    async def get_beliefs(session_id: str) -> list[dict[str, Any]]:
        _require_session(session_id)
        return [b.to_dict() for b in await runtime.memory.belief_log(session_id)]

    @app.get("/sessions/{session_id}/plan")
    async def get_plan(session_id: str) -> dict[str, Any]:
        _require_session(session_id)
        plan = await runtime.memory.get_plan(session_id)
        if plan is None:
            raise HTTPException(status_code=404, detail="no plan yet")
        return plan.to_dict()

    @app.get("/sessions/{session_id}/traces/{job_id}")
    async def get_trace(session_id: str, job_id: str) -> dict[str, Any]:
        _require_session(session_id)
        job = runtime.orchestrator.jobs.get(job_id)
        if job is None or job.session_id != session_id:
            raise HTTPException(status_code=404, detail=f"no job {job_id!r}")
        if job.trace is None:
            return {"job_id": job_id, "status": "RUNNING", "trace": None}
        return {"job_id": job_id, "status": job.trace.status.value, "trace": job.trace.to_dict()}

    @app.get("/sessions/{session_id}/jobs")
    async def list_jobs(session_id: str) -> list[dict[str, Any]]:
        _require_session(session_id)
        jobs = [j for j in runtime.orchestrator.jobs.values() if j.session_id == session_id]
        return [
            {
                "job_id": j.job_id,
                "status": j.trace.status.value if j.trace else "RUNNING",
                "started_at_turn": j.started_at_turn,
                "wall_ms": j.wall_ms,
                "committed_version": j.committed_version,
            }
            for j in jobs
        ]

    @app.post("/sessions/{session_id}/turns")
    async def post_turn(session_id: str, request: Request) -> StreamingResponse:
        _require_session(session_id)
        body = await request.json()
        text = body.get("text", "")
        if not isinstance(text, str) or not text.strip():
            raise HTTPException(status_code=422, detail="text must be non-empty")
        key = body.get("idempotency_key")
        if key is not None:
            try:
                runtime.orchestrator.claim_idempotency_key(session_id, key)
            except DuplicateTurn:
                raise HTTPException(status_code=409, detail=f"turn {key!r} already handled")

        queue: asyncio.Queue = asyncio.Queue()

        async def sink(chunk: str) -> None:
            await queue.put(chunk)

        async def drive() -> Any:
            return await runtime.turn(session_id, text, chunk_sink=sink)

        async def stream() -> AsyncIterator[str]:
            task = asyncio.ensure_future(drive())
            seq = 0
            while True:
                getter = asyncio.ensure_future(queue.get())
                done, _ = await asyncio.wait({getter, task}, return_when=asyncio.FIRST_COMPLETED)
                if getter in done:
                    seq += 1
                    yield _sse({"text": getter.result()}, event="chunk", event_id=seq)
                    continue
                getter.cancel()
                break
            while not queue.empty():
                seq += 1
                yield _sse({"text": queue.get_nowait()}, event="chunk", event_id=seq)
            try:
                result = task.result()
            except Exception as exc:  # surfaced as a terminal error frame
                log.exception("turn failed")
                yield _sse({"error": str(exc)}, event="error", event_id=seq + 1)
                return
            terminal = {
                "turn": result.turn.to_dict(),
                "gate_decision": result.plan.gate_decision.value,
                "talker_outcome": result.plan.talker_outcome.value,
                "job_id": result.plan.reasoner_job_id,
                "version_at_start": result.version_at_start,
                "latest_at_emission": result.latest_at_emission,
            }
            yield _sse(terminal, event="turn", event_id=seq + 1)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/sessions/{session_id}/events")
    async def events(
        session_id: str,
        request: Request,
        last_event_id: str | None = Header(default=None, alias="Last-Event-ID"),
    ) -> StreamingResponse:
        _require_session(session_id)
        resume_from = None
        if last_event_id is not None:
            try:
                resume_from = int(last_event_id)
            except ValueError:
                resume_from = None
        bus = runtime.orchestrator.bus(session_id)
        queue, replay = bus.subscribe(resume_from)

        async def stream() -> AsyncIterator[str]:
            try:
                for event in replay:
                    yield _sse(event["data"], event=event["type"], event_id=event["id"])
                while True:
                    if await request.is_disconnected():
                        return
                    try:
                        event = await asyncio.wait_for(queue.get(), timeout=15.0)
                    except asyncio.TimeoutError:
                        yield ": keep-alive\n\n"
                        continue
                    yield _sse(event["data"], event=event["type"], event_id=event["id"])
            finally:
                bus.unsubscribe(queue)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.exception_handler(SessionNotFound)
    async def _session_not_found(_request: Request, exc: SessionNotFound) -> JSONResponse:
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    return app


def _mount_ui(app: FastAPI, ui_dir: Path) -> None:
    from fastapi.staticfiles import StaticFiles

    app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")


def config_from_args(args: argparse.Namespace) -> RuntimeConfig:
    config = load_config(args.config)
    overrides: dict[str, Any] = {"fixtures_dir": str(args.fixtures_dir)}
    if args.backend is not None:
        overrides.update(
            talker_backend=args.backend,
            reasoner_backend=args.backend,
            classifier_backend=args.backend,
            extractor_backend=args.backend,
        )
    if args.storage_dir is not None:
        overrides["storage_dir"] = str(args.storage_dir)
    return config.with_overrides(overrides)


def main(argv: Sequence[str] | None = None) -> int:
    import uvicorn

    parser = argparse.ArgumentParser(prog="tandem-service", description=__doc__)
    parser.add_argument("--config", type=Path, default=None)
    parser.add_argument("--port", type=int, default=8712)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--backend", choices=["scripted", "remote"], default=None)
    parser.add_argument("--fixtures-dir", type=Path, default=Path("fixtures"))
    parser.add_argument("--storage-dir", type=Path, default=None)
    parser.add_argument("--ui-dir", type=Path, default=Path("frontend") / "dist")
    args = parser.parse_args(argv)

    runtime = build_runtime(config_from_args(args))
    app = create_app(runtime)
    if args.ui_dir.exists():
        _mount_ui(app, args.ui_dir)
        log.info("serving UI from %s at /ui", args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
