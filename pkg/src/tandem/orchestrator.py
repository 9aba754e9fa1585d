"""Dual-agent coordination.

One user turn runs through a fixed pipeline: append the user turn, snapshot
memory, evaluate the wait gate on the snapshot's belief, launch this turn's
reasoning job (superseding any in-flight one), then either reply
immediately from the possibly-stale snapshot or await the job and relay its
plan. Every path yields exactly one agent turn.

Cancellation is cooperative: superseding sets the job's token, which aborts
in-flight model calls at their next checkpoint. Once a run passes its final
checkpoint, its commit section executes atomically; a job therefore ends
either superseded with nothing committed or completed with exactly one
version committed.
"""

from __future__ import annotations

import asyncio
import logging
import time
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable

from .config import RuntimeConfig
from .core import (
    BeliefState,
    JobStatus,
    Observation,
    ObservationSource,
    ReasoningTrace,
    Role,
    Turn,
)
from .gateway import CancellationToken, OperationCancelled
from .memory import MemorySnapshot, MemoryStore, SessionState
from .reasoner import Reasoner, ReasoningJobSpec
from .talker import ChunkSink, JobFailed, Talker, select_instructions

log = logging.getLogger(__name__)


class GateDecision(Enum):
    PROCEED = "PROCEED"
    WAIT = "WAIT"


class TalkerOutcome(Enum):
    GENERATED = "GENERATED"
    RELAYED = "RELAYED"
    FALLBACK = "FALLBACK"


class DuplicateTurn(Exception):
    """A turn with an already-used idempotency key was rejected."""


def wait_gate(belief: BeliefState, wait_phases: Iterable[str] = ("PLANNING",)) -> GateDecision:
    """Pure gate: wait exactly when the committed belief's phase is one of
    the waiting phases (by default, only the planning phase)."""
    if belief.coaching_phase.value in set(wait_phases):
        return GateDecision.WAIT
    return GateDecision.PROCEED


_FEEDBACK_CUES = (
    "prefer",
    "instead",
    "rather",
    "don't like",
    "do not like",
    "not quite",
    "add ",
    "more steps",
    "change",
    "too ",
)


def looks_like_feedback(text: str) -> bool:
    lowered = text.lower()
    return any(cue in lowered for cue in _FEEDBACK_CUES)


@dataclass(frozen=True)
class TurnPlan:
    """Coordination record for one handled user turn."""

    session_id: str
    observation: Observation
    gate_decision: GateDecision
    reasoner_job_id: str | None
    talker_outcome: TalkerOutcome

    def __post_init__(self) -> None:
        if self.gate_decision is GateDecision.WAIT and self.talker_outcome is TalkerOutcome.GENERATED:
            raise ValueError("a WAIT turn must be relayed or fall back, never generated stale")

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "observation": self.observation.to_dict(),
            "gate_decision": self.gate_decision.value,
            "reasoner_job_id": self.reasoner_job_id,
            "talker_outcome": self.talker_outcome.value,
        }


@dataclass(frozen=True)
class TurnResult:
    turn: Turn
    plan: TurnPlan
    version_at_start: int
    latest_at_emission: int


@dataclass
class ReasonerJob:
    job_id: str
    session_id: str
    started_at_turn: int
    token: CancellationToken = field(default_factory=CancellationToken)
    done: asyncio.Event = field(default_factory=asyncio.Event)
    task: asyncio.Task | None = None
    trace: ReasoningTrace | None = None
    committed_version: int | None = None
    started_monotonic: float = 0.0
    wall_ms: float | None = None

    @property
    def status(self) -> JobStatus | None:
        return self.trace.status if self.trace is not None else None


class EventBus:
    """Per-session fanout with a replay buffer for last-event-id resume."""

    def __init__(self, buffer_size: int = 512) -> None:
        self._seq = 0
        self._buffer: deque[dict[str, Any]] = deque(maxlen=buffer_size)
        self._subscribers: set[asyncio.Queue] = set()

    def publish(self, event_type: str, data: dict[str, Any]) -> dict[str, Any]:
        self._seq += 1
        event = {"id": self._seq, "type": event_type, "data": data}
        self._buffer.append(event)
        for queue in self._subscribers:
            queue.put_nowait(event)
        return event

    def subscribe(self, last_event_id: int | None = None) -> tuple[asyncio.Queue, list[dict[str, Any]]]:
        queue: asyncio.Queue = asyncio.Queue()
        replay = (
            [e for e in self._buffer if last_event_id is not None and e["id"] > last_event_id]
            if last_event_id is not None
            else []
        )
        self._subscribers.add(queue)
        return queue, replay

    def unsubscribe(self, queue: asyncio.Queue) -> None:
        self._subscribers.discard(queue)


@dataclass
class _SessionControl:
    turn_lock: asyncio.Lock = field(default_factory=asyncio.Lock)
    job_seq: int = 0
    current_job: ReasonerJob | None = None
    idempotency_keys: set[str] = field(default_factory=set)
    bus: EventBus = field(default_factory=EventBus)


class Orchestrator:
    def __init__(
        self,
        memory: MemoryStore,
        talker: Talker,
        reasoner: Reasoner,
        config: RuntimeConfig,
    ) -> None:
        self.memory = memory
        self.talker = talker
        self.reasoner = reasoner
        self.config = config
        self._controls: dict[str, _SessionControl] = {}
        self.jobs: dict[str, ReasonerJob] = {}

    # ── session plumbing ─────────────────────────────────────────────

    async def create_session(self, session_id: str | None = None) -> SessionState:
        state = await self.memory.create_session(session_id)
        self._controls[state.session_id] = _SessionControl()
        return state

    async def _ensure_session(self, session_id: str) -> _SessionControl:
        if session_id not in self._controls:
            if not self.memory.has_session(session_id):
                # a restart must resume a persisted session, not reset it
                if session_id in self.memory.persisted_session_ids():
                    await self.memory.load_session(session_id)
                else:
                    await self.memory.create_session(session_id)
            self._controls[session_id] = _SessionControl()
        return self._controls[session_id]

    def bus(self, session_id: str) -> EventBus:
        if session_id not in self._controls:
            self._controls[session_id] = _SessionControl()
        return self._controls[session_id].bus

    def claim_idempotency_key(self, session_id: str, key: str) -> None:
        """Reserve a turn key up front so a replayed request can be
        rejected before any streaming starts."""
        if session_id not in self._controls:
            self._controls[session_id] = _SessionControl()
        ctl = self._controls[session_id]
        if key in ctl.idempotency_keys:
            raise DuplicateTurn(key)
        ctl.idempotency_keys.add(key)

    # ── the gate ─────────────────────────────────────────────────────

    def wait_gate(self, belief: BeliefState) -> GateDecision:
        if not self.config.gate_enabled:
            return GateDecision.PROCEED
        return wait_gate(belief, self.config.wait_phases)

    # ── turn handling ────────────────────────────────────────────────

    async def handle_user_turn(
        self,
        session_id: str,
        text: str,
        *,
        chunk_sink: ChunkSink | None = None,
        idempotency_key: str | None = None,
    ) -> TurnResult:
        ctl = await self._ensure_session(session_id)
        async with ctl.turn_lock:
            if idempotency_key is not None:
                if idempotency_key in ctl.idempotency_keys:
                    raise DuplicateTurn(idempotency_key)
                ctl.idempotency_keys.add(idempotency_key)

            started = time.monotonic()
            turn_id = await self.memory.append_turn(
                session_id, Turn(turn_id=0, role=Role.USER, text=text, timestamp=time.time())
            )
            user_turn = (await self.memory.history(session_id))[-1]
            ctl.bus.publish("turn_appended", user_turn.to_dict())

            observation = Observation(
                source=ObservationSource.USER,
                content=text,
                feedback_flag=looks_like_feedback(text),
                turn_id=turn_id,
            )
            snapshot = await self.memory.read_snapshot(session_id, self.config.history_window_k)
            version_at_start = snapshot.belief.version
            assert version_at_start is not None

            decision = self.wait_gate(snapshot.belief)
            job: ReasonerJob | None = None
            if decision is GateDecision.WAIT or self.config.reasoner_trigger_policy == "every_turn":
                job = await self._launch_job(ctl, session_id, observation, snapshot)

            if decision is GateDecision.PROCEED:
                context = self.talker.assemble_context(observation, snapshot)
                instructions = select_instructions(self.talker.instruction_set, snapshot.belief)
                turn = await self.talker.generate_utterance(
                    session_id, context, instructions,
                    turn_started_at=started, chunk_sink=chunk_sink,
                )
                outcome = TalkerOutcome.FALLBACK if turn.degraded else TalkerOutcome.GENERATED
            else:
                assert job is not None
                outcome, turn = await self._await_and_relay(
                    session_id, job, observation, started, chunk_sink
                )

            ctl.bus.publish("turn_appended", turn.to_dict())
            latest = await self.memory.latest_version(session_id)
            plan = TurnPlan(
                session_id=session_id,
                observation=observation,
                gate_decision=decision,
                reasoner_job_id=job.job_id if job else None,
                talker_outcome=outcome,
            )
            return TurnResult(
                turn=turn,
                plan=plan,
                version_at_start=version_at_start,
                latest_at_emission=latest,
            )

    async def _await_and_relay(
        self,
        session_id: str,
        job: ReasonerJob,
        observation: Observation,
        started: float,
        chunk_sink: ChunkSink | None,
    ) -> tuple[TalkerOutcome, Turn]:
        try:
            await asyncio.wait_for(job.done.wait(), timeout=self.config.gate_timeout_ms / 1000.0)
        except asyncio.TimeoutError:
            log.warning("session %s: gate timed out waiting for %s", session_id, job.job_id)
        if job.trace is not None and job.status is JobStatus.COMPLETED and job.trace.final_plan:
            try:
                turn = await self.talker.relay_reasoner_response(
                    session_id, job.trace, turn_started_at=started, chunk_sink=chunk_sink
                )
                return TalkerOutcome.RELAYED, turn
            except JobFailed:
                pass
        # Timeout or failed/planless job: respond from the freshest committed belief.
        snapshot = await self.memory.read_snapshot(session_id, self.config.history_window_k)
        context = self.talker.assemble_context(observation, snapshot)
        instructions = select_instructions(self.talker.instruction_set, snapshot.belief)
        turn = await self.talker.generate_utterance(
            session_id, context, instructions, turn_started_at=started, chunk_sink=chunk_sink
        )
        return TalkerOutcome.FALLBACK, turn

    # ── reasoning jobs ───────────────────────────────────────────────

    async def supersede(self, session_id: str) -> str | None:
        """Signal cancellation of the session's in-flight job, if any.

        Returns the signalled job id; the job wraps up at its next
        checkpoint and commits nothing.
        """
        ctl = self._controls.get(session_id)
        if ctl is None or ctl.current_job is None or ctl.current_job.done.is_set():
            return None
        job = ctl.current_job
        job.token.cancel()
        await job.done.wait()
        return job.job_id

    async def _launch_job(
        self,
        ctl: _SessionControl,
        session_id: str,
        observation: Observation,
        snapshot: MemorySnapshot,
    ) -> ReasonerJob:
        await self.supersede(session_id)
        ctl.job_seq += 1
        job = ReasonerJob(
            job_id=f"job-{session_id}-{ctl.job_seq}",
            session_id=session_id,
            started_at_turn=observation.turn_id,
            started_monotonic=time.monotonic(),
        )
        ctl.current_job = job
        self.jobs[job.job_id] = job
        ctl.bus.publish("job_update", {"job_id": job.job_id, "status": "RUNNING"})
        job.task = asyncio.create_task(self._drive_job(ctl, job, observation, snapshot))
        return job

    async def _drive_job(
        self,
        ctl: _SessionControl,
        job: ReasonerJob,
        observation: Observation,
        snapshot: MemorySnapshot,
    ) -> None:
        session_id = job.session_id
        try:
            decision = await self.reasoner.classify_phase(
                snapshot.history_window, snapshot.belief, cancel=job.token
            )
            note = (
                "phase classification failed; continuing with the current phase"
                if decision.fallback_used
                else None
            )
            mini = self.reasoner.mini_configs[decision.phase]
            spec = ReasoningJobSpec(
                job_id=job.job_id,
                session_id=session_id,
                trigger=observation,
                snapshot=snapshot,
                classifier_note=note,
            )
            trace = await self.reasoner.run_reasoning(spec, mini, cancel=job.token)

            if trace.status is JobStatus.COMPLETED:
                # Commit section: no cancellation checkpoints from here on.
                assert trace.final_belief is not None
                version = await self.memory.commit_belief(session_id, trace.final_belief)
                committed = replace(trace.final_belief, version=version, session_id=session_id)
                if trace.final_plan is not None:
                    await self.memory.store_plan(session_id, trace.final_plan)
                trace = replace(trace, final_belief=committed)
                job.committed_version = version
                ctl.bus.publish(
                    "belief_committed", {"version": version, "belief": committed.to_dict()}
                )
                if trace.final_plan is not None:
                    ctl.bus.publish("plan_updated", trace.final_plan.to_dict())
            job.trace = trace
        except OperationCancelled:
            job.trace = self._empty_trace(job, observation, JobStatus.SUPERSEDED)
        except Exception:  # a failed job must never take the turn path down
            log.exception("job %s failed", job.job_id)
            job.trace = self._empty_trace(job, observation, JobStatus.FAILED)
        finally:
            job.wall_ms = (time.monotonic() - job.started_monotonic) * 1000.0
            job.done.set()
            assert job.trace is not None
            ctl.bus.publish(
                "job_update",
                {"job_id": job.job_id, "status": job.trace.status.value, "wall_ms": job.wall_ms},
            )

    @staticmethod
    def _empty_trace(job: ReasonerJob, observation: Observation, status: JobStatus) -> ReasoningTrace:
        return ReasoningTrace(
            job_id=job.job_id,
            steps=(),
            final_belief=None,
            final_plan=None,
            step_count=0,
            started_at_turn=observation.turn_id,
            status=status,
        )

    async def wait_for_job(self, job_id: str, timeout: float | None = None) -> ReasonerJob:
        job = self.jobs[job_id]
        await asyncio.wait_for(job.done.wait(), timeout)
        return job

    def latest_trace(self, session_id: str) -> ReasoningTrace | None:
        ctl = self._controls.get(session_id)
        if ctl is None or ctl.current_job is None:
            return None
        return ctl.current_job.trace

    async def aclose(self) -> None:
        for ctl in self._controls.values():
            job = ctl.current_job
            if job is not None and not job.done.is_set():
                job.token.cancel()
        for ctl in self._controls.values():
            job = ctl.current_job
            if job is not None and job.task is not None:
                try:
                    await job.task
                except asyncio.CancelledError:
                    pass
