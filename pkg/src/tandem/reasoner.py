"""The slow deliberative agent.

One reasoning run per user turn: classify the coaching phase, dispatch the
matching mini-reasoner, and drive an interleaved loop where each model call
yields exactly one step: a thought, a tool call (executed immediately, its
observation appended to the growing context), or a belief extraction that
ends the loop. The run composes its extracted beliefs with the previous
one, synthesizes or adapts the plan in the planning phase, and hands the
result back for an atomic memory commit.

Step wire protocol, one response per step:

    THOUGHT: <free text>
    ACT: <tool>(key="value", ...)
    EXTRACT: <JSON belief document>

Responses that fit none of the forms are treated as thoughts; a reasoning
run should degrade, not die, on a sloppy model.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from .config import RuntimeConfig
from .core import (
    AugmentedAction,
    BeliefSource,
    BeliefState,
    CoachingPhase,
    JobStatus,
    Observation,
    ObservationSource,
    Plan,
    PlanStep,
    ReasoningTrace,
    SchemaErrorReport,
    TraceStep,
    validate_belief,
)
from .gateway import (
    CancellationToken,
    DecodeParams,
    GatewayError,
    ModelGateway,
    ModelRequest,
    OperationCancelled,
    OutputContract,
)
from .memory import MemorySnapshot
from .tools import ToolError, ToolRegistry

log = logging.getLogger(__name__)


class ExtractionFailed(Exception):
    def __init__(self, report: SchemaErrorReport) -> None:
        super().__init__(report.describe())
        self.report = report


class PlanSynthesisFailed(Exception):
    pass


@dataclass(frozen=True)
class MiniReasonerConfig:
    """Phase-specific reasoning configuration."""

    phase: CoachingPhase
    step_instructions: str
    extraction_schema_ref: str
    max_steps: int = 8
    allowed_tools: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass(frozen=True)
class PhaseDecision:
    phase: CoachingPhase
    fallback_used: bool = False


@dataclass(frozen=True)
class ExtractionResult:
    belief: BeliefState
    repairs: int


@dataclass(frozen=True)
class ReasoningJobSpec:
    job_id: str
    session_id: str
    trigger: Observation
    snapshot: MemorySnapshot
    classifier_note: str | None = None


def compose_belief(intermediates: Sequence[BeliefState], previous: BeliefState) -> BeliefState:
    """Merge intermediate beliefs into the previous committed one.

    Scalars take the last non-empty intermediate value, else the previous
    value. List fields take the ordered union: previous entries first, then
    each intermediate's in order, deduplicated. The phase comes from the
    last intermediate. The result is unversioned; the memory store assigns
    the version at commit.
    """
    if not intermediates:
        return previous

    def last_scalar(name: str) -> str | None:
        for belief in reversed(intermediates):
            value = getattr(belief, name)
            if value:
                return value
        return getattr(previous, name)

    def union(name: str) -> tuple[str, ...]:
        merged: list[str] = list(getattr(previous, name))
        for belief in intermediates:
            merged.extend(getattr(belief, name))
        return tuple(merged)  # BeliefState dedups on construction

    return BeliefState(
        session_id=previous.session_id,
        journey_title=last_scalar("journey_title") or previous.journey_title,
        coaching_phase=intermediates[-1].coaching_phase,
        primary_concern=last_scalar("primary_concern"),
        barriers=union("barriers"),
        goals=union("goals"),
        recommendations=union("recommendations"),
        plan_ref=last_scalar("plan_ref"),
        produced_by=BeliefSource.REASONER,
        produced_at_turn=intermediates[-1].produced_at_turn,
        version=None,
    )


_ACT_RE = re.compile(r"^ACT:\s*([A-Za-z_][\w-]*)\s*\((.*)\)\s*$", re.DOTALL)
_ARG_RE = re.compile(r"(\w+)\s*=\s*\"([^\"]*)\"")


def parse_step(response: str) -> tuple[str, object]:
    """Parse one step response into (kind, payload).

    Kinds: ("thought", text) | ("act", (tool, args)) | ("extract", document).
    """
    text = response.strip()
    if text.startswith("EXTRACT:"):
        return "extract", text[len("EXTRACT:"):].strip()
    if text.startswith("ACT:"):
        match = _ACT_RE.match(text)
        if match:
            args = {k: v for k, v in _ARG_RE.findall(match.group(2))}
            return "act", (match.group(1), args)
        return "thought", text
    if text.startswith("THOUGHT:"):
        return "thought", text[len("THOUGHT:"):].strip()
    return "thought", text


def render_step_lines(steps: Sequence[TraceStep]) -> str:
    lines: list[str] = []
    for step in steps:
        action = step.action
        if action.thought is not None:
            lines.append(f"THOUGHT: {action.thought}")
        elif action.tool_call is not None:
            args = ", ".join(f'{k}="{v}"' for k, v in sorted(action.tool_call.arguments.items()))
            lines.append(f"ACT: {action.tool_call.tool_name}({args})")
        elif action.belief_extraction is not None:
            lines.append("EXTRACT: " + action.belief_extraction.to_json())
        if step.observation is not None:
            lines.append(f"OBSERVATION: {step.observation.content}")
    return "\n".join(lines)


def render_reasoner_context(
    belief: BeliefState, history: Sequence, steps: Sequence[TraceStep], trigger: Observation
) -> str:
    """Growing loop context: prior steps interleave before the newest
    user observation."""
    history_lines = "\n".join(f"{t.role.value}: {t.text}" for t in history)
    return (
        f"BELIEF:\n{belief.to_json()}\n\n"
        f"HISTORY:\n{history_lines}\n\n"
        f"STEPS:\n{render_step_lines(steps)}\n\n"
        f"USER: {trigger.content}"
    )


class Reasoner:
    def __init__(
        self,
        gateway: ModelGateway,
        tools: ToolRegistry,
        mini_configs: Mapping[CoachingPhase, MiniReasonerConfig],
        config: RuntimeConfig,
        *,
        classifier_instructions: str,
        extractor_instructions: str,
    ) -> None:
        missing = [p.value for p in CoachingPhase if p not in mini_configs]
        if missing:
            raise ValueError(f"mini-reasoner configs missing phases: {missing}")
        for mini in mini_configs.values():
            unknown = set(mini.allowed_tools) - set(tools.names())
            if unknown:
                raise ValueError(f"mini-reasoner {mini.phase.value} allows unregistered tools {unknown}")
        self.gateway = gateway
        self.tools = tools
        self.mini_configs = dict(mini_configs)
        self.config = config
        self.classifier_instructions = classifier_instructions
        self.extractor_instructions = extractor_instructions

    def _decode(self) -> DecodeParams:
        return DecodeParams(
            max_tokens=self.config.max_tokens, temperature=self.config.reasoner_temperature
        )

    # ── phase classification ─────────────────────────────────────────

    async def classify_phase(
        self,
        history: Sequence,
        belief: BeliefState,
        cancel: CancellationToken | None = None,
    ) -> PhaseDecision:
        """Infer the coaching phase for this turn.

        One repair retry on an unparseable answer, then fall back to the
        current belief's phase; classification never raises past the
        cancellation signal.
        """
        history_lines = "\n".join(f"{t.role.value}: {t.text}" for t in history)
        context = f"BELIEF:\n{belief.to_json()}\n\nHISTORY:\n{history_lines}"
        request = ModelRequest(
            backend_ref=self.config.classifier_backend,
            role="reasoner_classifier",
            system_text=self.classifier_instructions,
            context_text=context,
            decode=self._decode(),
        )
        for attempt in range(2):
            try:
                response = await self.gateway.complete(request, cancel)
            except OperationCancelled:
                raise
            except GatewayError:
                break
            try:
                return PhaseDecision(CoachingPhase.parse(response))
            except ValueError:
                allowed = ", ".join(p.value for p in CoachingPhase)
                request = replace(
                    request,
                    context_text=context
                    + f"\n\nYour previous answer {response!r} was invalid."
                    + f" Answer with exactly one of: {allowed}.",
                )
        return PhaseDecision(belief.coaching_phase, fallback_used=True)

    # ── belief extraction with schema repair ─────────────────────────

    async def extract_belief(
        self,
        context_text: str,
        schema_ref: str,
        cancel: CancellationToken | None = None,
        *,
        initial_document: str | None = None,
    ) -> ExtractionResult:
        """Obtain a schema-valid belief document, repairing up to the
        configured retry budget by feeding the error report back."""
        request = ModelRequest(
            backend_ref=self.config.extractor_backend,
            role="extractor",
            system_text=self.extractor_instructions,
            context_text=context_text,
            output_contract=OutputContract.STRUCTURED_DOCUMENT,
            belief_schema_ref=schema_ref,
            decode=self._decode(),
        )
        budget = self.config.extraction_repair_retries
        document = initial_document
        if document is None:
            document = await self.gateway.complete(request, cancel)
        repairs = 0
        while True:
            result = validate_belief(document)
            if isinstance(result, BeliefState):
                return ExtractionResult(belief=result, repairs=repairs)
            if repairs >= budget:
                raise ExtractionFailed(result)
            repairs += 1
            repair_request = replace(
                request,
                context_text=(
                    f"{context_text}\n\nYour previous document was rejected."
                    f"\nSCHEMA ERRORS:\n{result.describe()}"
                    "\nReturn a corrected JSON document only."
                ),
            )
            document = await self.gateway.complete(repair_request, cancel)

    # ── the interleaved loop ─────────────────────────────────────────

    async def run_reasoning(
        self,
        spec: ReasoningJobSpec,
        mini: MiniReasonerConfig,
        cancel: CancellationToken | None = None,
    ) -> ReasoningTrace:
        """Drive one reasoning run to a trace.

        The loop ends on a belief extraction or, at the step budget, by
        forcing one. Tool failures become error observations and the loop
        continues. A cancellation signal truncates the trace with status
        SUPERSEDED and nothing downstream commits; an exhausted extraction
        repair budget yields status FAILED.
        """
        steps: list[TraceStep] = []
        intermediates: list[BeliefState] = []
        if spec.classifier_note and mini.max_steps >= 2:
            steps.append(TraceStep(AugmentedAction.think(spec.classifier_note)))

        def context() -> str:
            return render_reasoner_context(
                spec.snapshot.belief, spec.snapshot.history_window, steps, spec.trigger
            )

        def truncated(status: JobStatus) -> ReasoningTrace:
            return ReasoningTrace(
                job_id=spec.job_id,
                steps=tuple(steps),
                final_belief=None,
                final_plan=None,
                step_count=len(steps),
                started_at_turn=spec.trigger.turn_id,
                status=status,
            )

        try:
            while True:
                if cancel is not None and cancel.cancelled:
                    return truncated(JobStatus.SUPERSEDED)
                if len(steps) >= mini.max_steps - 1:
                    extraction = await self.extract_belief(
                        context(), mini.extraction_schema_ref, cancel
                    )
                    intermediates.append(self._stamp(extraction.belief, spec))
                    steps.append(TraceStep(AugmentedAction.extract(intermediates[-1])))
                    break

                request = ModelRequest(
                    backend_ref=self.config.reasoner_backend,
                    role="reasoner_step",
                    system_text=mini.step_instructions,
                    context_text=context(),
                    decode=self._decode(),
                )
                response = await self.gateway.complete(request, cancel)
                kind, payload = parse_step(response)
                if kind == "thought":
                    steps.append(TraceStep(AugmentedAction.think(str(payload))))
                elif kind == "act":
                    tool_name, arguments = payload  # type: ignore[misc]
                    steps.append(self._run_tool(tool_name, arguments, mini, spec))
                else:  # extract
                    extraction = await self.extract_belief(
                        context(),
                        mini.extraction_schema_ref,
                        cancel,
                        initial_document=str(payload),
                    )
                    intermediates.append(self._stamp(extraction.belief, spec))
                    steps.append(TraceStep(AugmentedAction.extract(intermediates[-1])))
                    break
        except OperationCancelled:
            return truncated(JobStatus.SUPERSEDED)
        except ExtractionFailed as exc:
            log.warning("job %s: extraction failed after repairs: %s", spec.job_id, exc)
            return truncated(JobStatus.FAILED)

        composed = compose_belief(intermediates, spec.snapshot.belief)
        composed = replace(
            composed,
            version=None,
            produced_by=BeliefSource.REASONER,
            produced_at_turn=spec.trigger.turn_id,
        )

        plan: Plan | None = None
        if composed.coaching_phase is CoachingPhase.PLANNING:
            try:
                plan = await self._plan_for(spec, mini, composed, cancel)
            except OperationCancelled:
                return truncated(JobStatus.SUPERSEDED)
            except PlanSynthesisFailed as exc:
                log.warning("job %s: plan synthesis failed: %s", spec.job_id, exc)
                return truncated(JobStatus.FAILED)
            composed = replace(composed, plan_ref=plan.plan_id)

        if cancel is not None and cancel.cancelled:
            return truncated(JobStatus.SUPERSEDED)
        return ReasoningTrace(
            job_id=spec.job_id,
            steps=tuple(steps),
            final_belief=composed,
            final_plan=plan,
            step_count=len(steps),
            started_at_turn=spec.trigger.turn_id,
            status=JobStatus.COMPLETED,
        )

    def _stamp(self, belief: BeliefState, spec: ReasoningJobSpec) -> BeliefState:
        return replace(
            belief,
            session_id=spec.session_id,
            produced_by=BeliefSource.REASONER,
            produced_at_turn=spec.trigger.turn_id,
            version=None,
        )

    def _run_tool(
        self,
        tool_name: str,
        arguments: Mapping[str, str],
        mini: MiniReasonerConfig,
        spec: ReasoningJobSpec,
    ) -> TraceStep:
        action = AugmentedAction.act(tool_name, arguments)
        try:
            if tool_name not in mini.allowed_tools:
                raise ToolError(f"tool {tool_name!r} not allowed in phase {mini.phase.value}")
            result = self.tools.invoke(tool_name, arguments)
            content = result.content
        except ToolError as exc:
            content = f"ERROR: {exc}"
        observation = Observation(
            source=ObservationSource.TOOL,
            content=content,
            feedback_flag=False,
            turn_id=spec.trigger.turn_id,
        )
        return TraceStep(action=action, observation=observation)

    # ── plan synthesis and adaptation ────────────────────────────────

    async def _plan_for(
        self,
        spec: ReasoningJobSpec,
        mini: MiniReasonerConfig,
        belief: BeliefState,
        cancel: CancellationToken | None,
    ) -> Plan:
        previous_version = spec.snapshot.belief.version
        assert previous_version is not None
        derived_from = previous_version + 1  # the version this run's commit will take
        existing = spec.snapshot.plan
        if existing is not None:
            return await self.adapt_plan(existing, spec.trigger, mini, derived_from, cancel)
        return await self.synthesize_plan(
            belief, spec, mini, derived_from, cancel, plan_id=f"plan-{spec.session_id}"
        )

    async def synthesize_plan(
        self,
        belief: BeliefState,
        spec: ReasoningJobSpec,
        mini: MiniReasonerConfig,
        derived_from_version: int,
        cancel: CancellationToken | None = None,
        *,
        plan_id: str,
    ) -> Plan:
        """First plan revision; steps may be decorated with resources
        fetched through the search tool."""
        context = (
            "PLAN REQUEST:\n"
            f"BELIEF:\n{belief.to_json()}\n\n"
            f"USER: {spec.trigger.content}"
        )
        steps = await self._request_plan_steps(context, mini, cancel)
        return Plan(
            plan_id=plan_id, steps=steps, revision=1, derived_from_version=derived_from_version
        )

    async def adapt_plan(
        self,
        existing: Plan,
        feedback: Observation,
        mini: MiniReasonerConfig,
        derived_from_version: int,
        cancel: CancellationToken | None = None,
    ) -> Plan:
        """Revise a plan purely by re-prompting with the feedback in
        context; untouched steps are preserved by identity."""
        if not feedback.content.strip():
            raise ValueError("cannot adapt a plan from empty feedback")
        context = (
            "PLAN REQUEST:\n"
            f"FEEDBACK: {feedback.content}\n\n"
            f"CURRENT PLAN:\n{existing.to_json()}"
        )
        by_title = {step.title: step for step in existing.steps}
        steps = await self._request_plan_steps(context, mini, cancel, existing_steps=by_title)
        return Plan(
            plan_id=existing.plan_id,
            steps=steps,
            revision=existing.revision + 1,
            derived_from_version=derived_from_version,
        )

    async def _request_plan_steps(
        self,
        context: str,
        mini: MiniReasonerConfig,
        cancel: CancellationToken | None,
        existing_steps: Mapping[str, PlanStep] | None = None,
    ) -> tuple[PlanStep, ...]:
        import json

        request = ModelRequest(
            backend_ref=self.config.reasoner_backend,
            role="reasoner_step",
            system_text=mini.step_instructions,
            context_text=context,
            decode=self._decode(),
        )
        response = await self.gateway.complete(request, cancel)
        try:
            document = json.loads(response)
            raw_steps = document["steps"]
            if not isinstance(raw_steps, list) or not raw_steps:
                raise ValueError("steps must be a non-empty list")
        except (ValueError, KeyError, TypeError) as exc:
            raise PlanSynthesisFailed(f"malformed plan document: {exc}") from exc

        steps: list[PlanStep] = []
        for raw in raw_steps:
            title = raw.get("title", "")
            if not title:
                raise PlanSynthesisFailed("plan step missing title")
            if existing_steps is not None and title in existing_steps:
                steps.append(existing_steps[title])
                continue
            resources = ()
            query = raw.get("resource_query")
            if query and "search" in mini.allowed_tools:
                try:
                    limit = str(raw.get("resource_limit", 2))
                    resources = tuple(self.tools.invoke("search", {"query": query, "limit": limit}).data)
                except ToolError as exc:
                    log.warning("plan step %r: resource fetch failed: %s", title, exc)
                    resources = ()
            steps.append(
                PlanStep(title=title, description=raw.get("description", ""), resources=resources)
            )
        return tuple(steps)
