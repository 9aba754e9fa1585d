"""Line-oriented chat against a local runtime, for headless use.

Meta-commands dump the session's documents:

    /belief   latest committed belief
    /beliefs  every committed version
    /plan     current plan rendering
    /trace    the latest reasoning trace
    /quit     exit

Anything else is sent as a user turn; the reply streams as it generates.

CLI:  python -m tandem.repl [--config cfg.yaml] [--backend scripted]
          [--fixtures-dir fixtures] [--session demo]
"""

from __future__ import annotations

import argparse
import asyncio
import sys
from pathlib import Path
from typing import Sequence

from .core import pretty_json
from .runtime import CoachRuntime, build_runtime
from .service import config_from_args
from .talker import render_plan


async def dispatch_meta(runtime: CoachRuntime, session_id: str, command: str) -> str:
    if command == "/belief":
        snapshot = await runtime.memory.read_snapshot(session_id)
        return pretty_json(snapshot.belief.to_dict())
    if command == "/beliefs":
        log = await runtime.memory.belief_log(session_id)
        return pretty_json([b.to_dict() for b in log])
    if command == "/plan":
        plan = await runtime.memory.get_plan(session_id)
        return render_plan(plan) if plan else "no plan yet"
    if command == "/trace":
        trace = runtime.orchestrator.latest_trace(session_id)
        return pretty_json(trace.to_dict()) if trace else "no trace yet"
    return f"unknown command {command}; try /belief /beliefs /plan /trace /quit"


async def chat_loop(runtime: CoachRuntime, session_id: str) -> None:
    await runtime.create_session(session_id)
    print(f"session {session_id}; /quit to exit")
    loop = asyncio.get_running_loop()
    while True:
        try:
            line = await loop.run_in_executor(None, lambda: input("you> "))
        except (EOFError, KeyboardInterrupt):
            break
        line = line.strip()
        if not line:
            continue
        if line == "/quit":
            break
        if line.startswith("/"):
            print(await dispatch_meta(runtime, session_id, line))
            continue

        print("coach> ", end="", flush=True)

        async def sink(chunk: str) -> None:
            print(chunk, end="", flush=True)

        result = await runtime.turn(session_id, line, chunk_sink=sink)
        badge = "waited" if result.plan.gate_decision.value == "WAIT" else "proceeded"
        print(f"\n  [v{result.turn.belief_version_used}, {badge}, "
              f"{result.turn.latency_ms:.0f} ms]")
    await runtime.aclose()


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="tandem-chat", description=__doc__)
    parser.add_argument("--config", type=Path, default=None)
    parser.add_argument("--backend", choices=["scripted", "remote"], default=None)
    parser.add_argument("--fixtures-dir", type=Path, default=Path("fixtures"))
    parser.add_argument("--storage-dir", type=Path, default=None)
    parser.add_argument("--session", default="repl")
    args = parser.parse_args(argv)

    runtime = build_runtime(config_from_args(args))
    try:
        asyncio.run(chat_loop(runtime, args.session))
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
