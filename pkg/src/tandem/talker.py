"""The fast conversational agent.

Builds its prompt from the latest user observation, the newest committed
belief snapshot, and a recent history window, in that fixed order; picks
phase-conditioned instructions; and streams the reply. It never calls
tools and never waits for the reasoning agent on its own; the orchestrator
decides when a reply must be relayed from a finished reasoning run instead
of generated.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Awaitable, Callable

from .config import RuntimeConfig
from .core import BeliefState, InstructionSet, JobStatus, Observation, Plan, Role, Turn
from .gateway import DecodeParams, GatewayError, ModelGateway, ModelRequest
from .memory import MemorySnapshot, MemoryStore

ChunkSink = Callable[[str], Awaitable[None]]


class JobFailed(Exception):
    """A relay was requested but the awaited reasoning job has no plan."""


@dataclass(frozen=True)
class TalkerContext:
    """Assembled prompt context: observation, then belief, then history."""

    latest_observation: Observation
    belief: BeliefState
    history_window: tuple[Turn, ...]
    rendered: str


def assemble_context(observation: Observation, snapshot: MemorySnapshot) -> TalkerContext:
    """Deterministically render the three context segments.

    Same inputs produce byte-identical text; the belief is embedded in its
    canonical serialized form rather than prose so nothing is lost.
    """
    history_lines = "\n".join(f"{t.role.value}: {t.text}" for t in snapshot.history_window)
    rendered = (
        f"OBSERVATION:\n{observation.content}\n\n"
        f"BELIEF:\n{snapshot.belief.to_json()}\n\n"
        f"HISTORY:\n{history_lines}"
    )
    return TalkerContext(
        latest_observation=observation,
        belief=snapshot.belief,
        history_window=snapshot.history_window,
        rendered=rendered,
    )


def select_instructions(instruction_set: InstructionSet, belief: BeliefState) -> str:
    """Constitution plus the phase-matching instruction text.

    A function of the coaching phase only; every other belief field is
    ignored on purpose.
    """
    phase_text = instruction_set.phase_instructions[belief.coaching_phase]
    return f"{instruction_set.constitution}\n\n{phase_text}"


def render_plan(plan: Plan) -> str:
    """Canonical human-readable rendering of a plan.

    The relay path emits exactly this text, so it doubles as the wire form
    of "the reasoning agent's answer" in transcripts.
    """
    lines = [f"Here is your coaching plan (revision {plan.revision}):", ""]
    for i, step in enumerate(plan.steps, start=1):
        lines.append(f"Step {i}: {step.title}")
        lines.append(step.description)
        if step.resources:
            lines.append("Resources:")
            for resource in step.resources:
                lines.append(f"- {resource.title} ({resource.uri})")
                if resource.reasoning:
                    lines.append(f"  Why: {resource.reasoning}")
        lines.append("")
    return "\n".join(lines).rstrip("\n")


class Talker:
    def __init__(
        self,
        gateway: ModelGateway,
        memory: MemoryStore,
        instruction_set: InstructionSet,
        config: RuntimeConfig,
    ) -> None:
        self.gateway = gateway
        self.memory = memory
        self.instruction_set = instruction_set
        self.config = config

    def assemble_context(self, observation: Observation, snapshot: MemorySnapshot) -> TalkerContext:
        return assemble_context(observation, snapshot)

    def select_instructions(self, belief: BeliefState) -> str:
        return select_instructions(self.instruction_set, belief)

    async def generate_utterance(
        self,
        session_id: str,
        context: TalkerContext,
        instructions: str,
        *,
        turn_started_at: float | None = None,
        chunk_sink: ChunkSink | None = None,
    ) -> Turn:
        """Stream a reply and append the resulting agent turn.

        A backend failure degrades to the configured fallback utterance
        rather than silence; the turn is flagged so downstream consumers
        can tell.
        """
        started = time.monotonic() if turn_started_at is None else turn_started_at
        request = ModelRequest(
            backend_ref=self.config.talker_backend,
            role="talker",
            system_text=instructions,
            context_text=context.rendered,
            decode=DecodeParams(
                max_tokens=self.config.max_tokens, temperature=self.config.talker_temperature
            ),
        )
        parts: list[str] = []
        degraded = False
        try:
            async for chunk in self.gateway.stream(request):
                parts.append(chunk)
                if chunk_sink is not None:
                    await chunk_sink(chunk)
            text = "".join(parts)
        except GatewayError:
            text = self.config.fallback_utterance
            degraded = True
            if chunk_sink is not None:
                await chunk_sink(text)
        return await self._append_agent_turn(
            session_id, text, context.belief.version, started, degraded
        )

    async def relay_reasoner_response(
        self,
        session_id: str,
        trace,
        *,
        turn_started_at: float | None = None,
        chunk_sink: ChunkSink | None = None,
    ) -> Turn:
        """Copy a finished reasoning run's plan verbatim as the agent turn.

        No model call happens here; the text is the plan rendering and the
        recorded belief version is the one the run just committed.
        """
        if trace.status is not JobStatus.COMPLETED or trace.final_plan is None:
            raise JobFailed(f"job {trace.job_id} has no plan to relay")
        started = time.monotonic() if turn_started_at is None else turn_started_at
        text = render_plan(trace.final_plan)
        if chunk_sink is not None:
            await chunk_sink(text)
        assert trace.final_belief is not None
        return await self._append_agent_turn(
            session_id, text, trace.final_belief.version, started, degraded=False
        )

    async def _append_agent_turn(
        self,
        session_id: str,
        text: str,
        belief_version: int | None,
        started: float,
        degraded: bool,
    ) -> Turn:
        latency_ms = (time.monotonic() - started) * 1000.0
        turn = Turn(
            turn_id=0,
            role=Role.AGENT,
            text=text,
            timestamp=time.time(),
            belief_version_used=belief_version,
            latency_ms=latency_ms,
            degraded=degraded,
        )
        turn_id = await self.memory.append_turn(session_id, turn)
        return replace(turn, turn_id=turn_id)
