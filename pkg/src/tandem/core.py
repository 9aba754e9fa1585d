"""Shared domain types for the dual-agent coaching runtime.

Everything in this module is an immutable value object, safe to copy and
hand between concurrent tasks. All mutation goes through the memory store.

The canonical wire form for every type is UTF-8 JSON with snake_case field
names; enums serialize as upper-case strings. That form is the contract for
persistence, the HTTP API, and the web UI.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Mapping, Union

SCHEMA_VERSION = 1


class CoachingPhase(Enum):
    UNDERSTANDING = "UNDERSTANDING"
    GOAL_SETTING = "GOAL_SETTING"
    PLANNING = "PLANNING"

    @classmethod
    def parse(cls, raw: str) -> "CoachingPhase":
        """Parse a phase name, tolerating case and space/underscore variants."""
        normalized = raw.strip().upper().replace(" ", "_").replace("-", "_")
        return cls(normalized)


class Role(Enum):
    USER = "USER"
    AGENT = "AGENT"


class ObservationSource(Enum):
    USER = "USER"
    TOOL = "TOOL"


class BeliefSource(Enum):
    REASONER = "REASONER"
    BOOTSTRAP = "BOOTSTRAP"


class JobStatus(Enum):
    COMPLETED = "COMPLETED"
    SUPERSEDED = "SUPERSEDED"
    FAILED = "FAILED"


class ActionKind(Enum):
    THOUGHT = "THOUGHT"
    TOOL_CALL = "TOOL_CALL"
    BELIEF_EXTRACTION = "BELIEF_EXTRACTION"
    UTTERANCE = "UTTERANCE"


def canonical_json(data: Any) -> str:
    """Canonical serialization: compact, sorted keys, UTF-8 preserved."""
    return json.dumps(data, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def pretty_json(data: Any) -> str:
    return json.dumps(data, ensure_ascii=False, sort_keys=True, indent=2)


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _dedup(items: Iterable[str]) -> tuple[str, ...]:
    # set semantics with stable insertion order
    seen: dict[str, None] = {}
    for item in items:
        if item not in seen:
            seen[item] = None
    return tuple(seen)


@dataclass(frozen=True)
class BeliefState:
    """Structured model of the user, versioned by the memory store.

    ``version`` is None until the store commits the belief; the bootstrap
    belief is pinned at version 0. List fields are deduplicated keeping
    first-occurrence order.
    """

    session_id: str
    journey_title: str
    coaching_phase: CoachingPhase
    primary_concern: str | None = None
    barriers: tuple[str, ...] = ()
    goals: tuple[str, ...] = ()
    recommendations: tuple[str, ...] = ()
    plan_ref: str | None = None
    produced_by: BeliefSource = BeliefSource.REASONER
    produced_at_turn: int = -1
    version: int | None = None

    def __post_init__(self) -> None:
        if self.version is not None and self.version < 0:
            raise ValueError("belief version must be >= 0")
        for name in ("barriers", "goals", "recommendations"):
            object.__setattr__(self, name, _dedup(getattr(self, name)))

    def with_version(self, version: int) -> "BeliefState":
        return replace(self, version=version)

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "session_id": self.session_id,
            "journey_title": self.journey_title,
            "primary_concern": self.primary_concern,
            "barriers": list(self.barriers),
            "goals": list(self.goals),
            "recommendations": list(self.recommendations),
            "coaching_phase": self.coaching_phase.value,
            "plan_ref": self.plan_ref,
            "produced_by": self.produced_by.value,
            "produced_at_turn": self.produced_at_turn,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "BeliefState":
        result = _belief_from_mapping(data)
        if isinstance(result, SchemaErrorReport):
            raise ValueError(f"invalid belief document: {result.describe()}")
        return result


def bootstrap_belief(session_id: str, journey_title: str) -> BeliefState:
    """The version-0 belief a fresh session starts from."""
    return BeliefState(
        session_id=session_id,
        journey_title=journey_title,
        coaching_phase=CoachingPhase.UNDERSTANDING,
        produced_by=BeliefSource.BOOTSTRAP,
        produced_at_turn=-1,
        version=0,
    )


@dataclass(frozen=True)
class FieldProblem:
    field: str
    reason: str

    def to_dict(self) -> dict[str, str]:
        return {"field": self.field, "reason": self.reason}


@dataclass(frozen=True)
class SchemaErrorReport:
    """Field-by-field account of why a document is not a valid belief.

    ``kind`` is "parse" when the document is not well-formed JSON and
    "schema" when it parsed but violates the belief schema. Reported
    field-by-field rather than fail-fast so the extraction repair loop
    can feed the whole report back to the model.
    """

    kind: str
    problems: tuple[FieldProblem, ...]

    def describe(self) -> str:
        return "; ".join(f"{p.field}: {p.reason}" for p in self.problems)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "problems": [p.to_dict() for p in self.problems]}


_REQUIRED_BELIEF_FIELDS = ("journey_title", "coaching_phase")
_LIST_BELIEF_FIELDS = ("barriers", "goals", "recommendations")


def _belief_from_mapping(data: Mapping[str, Any]) -> Union[BeliefState, SchemaErrorReport]:
    problems: list[FieldProblem] = []

    for name in _REQUIRED_BELIEF_FIELDS:
        if name not in data or data[name] is None:
            problems.append(FieldProblem(name, "required field missing"))

    journey_title = data.get("journey_title")
    if journey_title is not None and not isinstance(journey_title, str):
        problems.append(FieldProblem("journey_title", "must be text"))

    phase: CoachingPhase | None = None
    raw_phase = data.get("coaching_phase")
    if raw_phase is not None:
        if not isinstance(raw_phase, str):
            problems.append(FieldProblem("coaching_phase", "must be text"))
        else:
            try:
                phase = CoachingPhase.parse(raw_phase)
            except ValueError:
                allowed = ", ".join(p.value for p in CoachingPhase)
                problems.append(
                    FieldProblem("coaching_phase", f"{raw_phase!r} is not one of: {allowed}")
                )

    lists: dict[str, tuple[str, ...]] = {}
    for name in _LIST_BELIEF_FIELDS:
        raw = data.get(name, [])
        if raw is None:
            raw = []
        if not isinstance(raw, (list, tuple)) or any(not isinstance(x, str) for x in raw):
            problems.append(FieldProblem(name, "must be a list of text entries"))
            continue
        lists[name] = _dedup(raw)

    concern = data.get("primary_concern")
    if concern is not None and not isinstance(concern, str):
        problems.append(FieldProblem("primary_concern", "must be text or null"))

    plan_ref = data.get("plan_ref")
    if plan_ref is not None and not isinstance(plan_ref, str):
        problems.append(FieldProblem("plan_ref", "must be text or null"))

    version = data.get("version")
    if version is not None and (not isinstance(version, int) or isinstance(version, bool) or version < 0):
        problems.append(FieldProblem("version", "must be a non-negative integer or null"))

    produced_by = BeliefSource.REASONER
    raw_source = data.get("produced_by")
    if raw_source is not None:
        if isinstance(raw_source, str):
            try:
                produced_by = BeliefSource(raw_source.strip().upper())
            except ValueError:
                problems.append(FieldProblem("produced_by", f"{raw_source!r} is not REASONER or BOOTSTRAP"))
        else:
            problems.append(FieldProblem("produced_by", "must be text"))

    produced_at_turn = data.get("produced_at_turn", -1)
    if not isinstance(produced_at_turn, int) or isinstance(produced_at_turn, bool):
        problems.append(FieldProblem("produced_at_turn", "must be an integer"))

    session_id = data.get("session_id", "")
    if not isinstance(session_id, str):
        problems.append(FieldProblem("session_id", "must be text"))

    if problems:
        return SchemaErrorReport(kind="schema", problems=tuple(problems))

    assert phase is not None and isinstance(journey_title, str)
    return BeliefState(
        session_id=session_id,
        journey_title=journey_title,
        coaching_phase=phase,
        primary_concern=concern,
        barriers=lists["barriers"],
        goals=lists["goals"],
        recommendations=lists["recommendations"],
        plan_ref=plan_ref,
        produced_by=produced_by,
        produced_at_turn=produced_at_turn,
        version=version,
    )


def validate_belief(document: str) -> Union[BeliefState, SchemaErrorReport]:
    """Validate a structured document against the belief schema.

    Returns a BeliefState when every required field is present and every
    enum value is legal; otherwise a SchemaErrorReport naming each
    violated field. Never raises on bad input.
    """
    try:
        data = json.loads(document)
    except (json.JSONDecodeError, TypeError) as exc:
        return SchemaErrorReport(
            kind="parse", problems=(FieldProblem("document", f"not well-formed JSON: {exc}"),)
        )
    if not isinstance(data, Mapping):
        return SchemaErrorReport(
            kind="parse", problems=(FieldProblem("document", "top level must be a JSON object"),)
        )
    return _belief_from_mapping(data)


@dataclass(frozen=True)
class Observation:
    """A unit of input for the reasoning loop: user text or a tool result.

    ``feedback_flag`` marks content that reads as evaluative feedback on
    prior agent output rather than new information.
    """

    source: ObservationSource
    content: str
    feedback_flag: bool = False
    turn_id: int = 0

    def __post_init__(self) -> None:
        if self.source is ObservationSource.USER and not self.content:
            raise ValueError("user observations must carry non-empty content")
        if self.turn_id < 0:
            raise ValueError("turn_id must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        return {
            "source": self.source.value,
            "content": self.content,
            "feedback_flag": self.feedback_flag,
            "turn_id": self.turn_id,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Observation":
        return cls(
            source=ObservationSource(data["source"]),
            content=data["content"],
            feedback_flag=bool(data.get("feedback_flag", False)),
            turn_id=int(data.get("turn_id", 0)),
        )


@dataclass(frozen=True)
class Resource:
    """An external reference attached to a plan step."""

    uri: str
    title: str
    source: str = ""
    reasoning: str = ""

    def __post_init__(self) -> None:
        if not self.uri:
            raise ValueError("resource uri must be non-empty")
        if not self.title:
            raise ValueError("resource title must be non-empty")

    def to_dict(self) -> dict[str, str]:
        return {
            "uri": self.uri,
            "title": self.title,
            "source": self.source,
            "reasoning": self.reasoning,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Resource":
        return cls(
            uri=data["uri"],
            title=data["title"],
            source=data.get("source", ""),
            reasoning=data.get("reasoning", ""),
        )


@dataclass(frozen=True)
class PlanStep:
    title: str
    description: str
    resources: tuple[Resource, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "title": self.title,
            "description": self.description,
            "resources": [r.to_dict() for r in self.resources],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PlanStep":
        return cls(
            title=data["title"],
            description=data.get("description", ""),
            resources=tuple(Resource.from_dict(r) for r in data.get("resources", [])),
        )


@dataclass(frozen=True)
class Plan:
    """Multi-step coaching plan, revised in place under a stable plan_id."""

    plan_id: str
    steps: tuple[PlanStep, ...]
    revision: int
    derived_from_version: int

    def __post_init__(self) -> None:
        if self.revision >= 1 and not self.steps:
            raise ValueError("a plan at revision >= 1 must have steps")
        if self.revision < 0:
            raise ValueError("plan revision must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        return {
            "plan_id": self.plan_id,
            "steps": [s.to_dict() for s in self.steps],
            "revision": self.revision,
            "derived_from_version": self.derived_from_version,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Plan":
        return cls(
            plan_id=data["plan_id"],
            steps=tuple(PlanStep.from_dict(s) for s in data["steps"]),
            revision=int(data["revision"]),
            derived_from_version=int(data["derived_from_version"]),
        )


@dataclass(frozen=True)
class Turn:
    """One utterance in the append-only conversation history.

    Agent turns record the belief version their context was built from and
    the wall latency of producing the reply. ``degraded`` marks replies that
    fell back to the canned utterance after a backend failure.
    """

    turn_id: int
    role: Role
    text: str
    timestamp: float
    belief_version_used: int | None = None
    latency_ms: float | None = None
    degraded: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "turn_id": self.turn_id,
            "role": self.role.value,
            "text": self.text,
            "timestamp": self.timestamp,
            "belief_version_used": self.belief_version_used,
            "latency_ms": self.latency_ms,
            "degraded": self.degraded,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Turn":
        return cls(
            turn_id=int(data["turn_id"]),
            role=Role(data["role"]),
            text=data["text"],
            timestamp=float(data["timestamp"]),
            belief_version_used=data.get("belief_version_used"),
            latency_ms=data.get("latency_ms"),
            degraded=bool(data.get("degraded", False)),
        )


@dataclass(frozen=True)
class InstructionSet:
    """Constitution plus per-phase instruction text for the talking agent."""

    name: str
    constitution: str
    phase_instructions: Mapping[CoachingPhase, str]
    belief_schema_ref: str

    def __post_init__(self) -> None:
        for phase in CoachingPhase:
            if not self.phase_instructions.get(phase):
                raise ValueError(f"missing instruction text for phase {phase.value}")


@dataclass(frozen=True)
class ToolCall:
    tool_name: str
    arguments: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.tool_name:
            raise ValueError("tool_name must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {"tool_name": self.tool_name, "arguments": dict(self.arguments)}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ToolCall":
        return cls(tool_name=data["tool_name"], arguments=dict(data.get("arguments", {})))


@dataclass(frozen=True)
class AugmentedAction:
    """Tagged union over the four things an agent can do in one step.

    Exactly one of thought / tool_call / belief_extraction / utterance is
    populated; ``kind`` names the populated variant.
    """

    thought: str | None = None
    tool_call: ToolCall | None = None
    belief_extraction: BeliefState | None = None
    utterance: str | None = None

    def __post_init__(self) -> None:
        populated = [
            name
            for name in ("thought", "tool_call", "belief_extraction", "utterance")
            if getattr(self, name) is not None
        ]
        if len(populated) != 1:
            raise ValueError(f"exactly one variant must be populated, got {populated or 'none'}")

    @property
    def kind(self) -> ActionKind:
        if self.thought is not None:
            return ActionKind.THOUGHT
        if self.tool_call is not None:
            return ActionKind.TOOL_CALL
        if self.belief_extraction is not None:
            return ActionKind.BELIEF_EXTRACTION
        return ActionKind.UTTERANCE

    @classmethod
    def think(cls, text: str) -> "AugmentedAction":
        return cls(thought=text)

    @classmethod
    def act(cls, tool_name: str, arguments: Mapping[str, str]) -> "AugmentedAction":
        return cls(tool_call=ToolCall(tool_name, dict(arguments)))

    @classmethod
    def extract(cls, belief: BeliefState) -> "AugmentedAction":
        return cls(belief_extraction=belief)

    @classmethod
    def say(cls, text: str) -> "AugmentedAction":
        return cls(utterance=text)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind.value}
        if self.thought is not None:
            out["thought"] = self.thought
        elif self.tool_call is not None:
            out["tool_call"] = self.tool_call.to_dict()
        elif self.belief_extraction is not None:
            out["belief_extraction"] = self.belief_extraction.to_dict()
        else:
            out["utterance"] = self.utterance
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "AugmentedAction":
        kind = ActionKind(data["kind"])
        if kind is ActionKind.THOUGHT:
            return cls.think(data["thought"])
        if kind is ActionKind.TOOL_CALL:
            return cls(tool_call=ToolCall.from_dict(data["tool_call"]))
        if kind is ActionKind.BELIEF_EXTRACTION:
            return cls.extract(BeliefState.from_dict(data["belief_extraction"]))
        return cls.say(data["utterance"])


@dataclass(frozen=True)
class TraceStep:
    action: AugmentedAction
    observation: Observation | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "action": self.action.to_dict(),
            "observation": self.observation.to_dict() if self.observation else None,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TraceStep":
        obs = data.get("observation")
        return cls(
            action=AugmentedAction.from_dict(data["action"]),
            observation=Observation.from_dict(obs) if obs else None,
        )


@dataclass(frozen=True)
class ReasoningTrace:
    """Ordered record of one reasoning run.

    ``final_belief`` is None only for superseded or failed runs, which
    commit nothing; completed runs always end in a belief extraction and
    carry the composed belief.
    """

    job_id: str
    steps: tuple[TraceStep, ...]
    final_belief: BeliefState | None
    final_plan: Plan | None
    step_count: int
    started_at_turn: int
    status: JobStatus

    def to_dict(self) -> dict[str, Any]:
        return {
            "job_id": self.job_id,
            "steps": [s.to_dict() for s in self.steps],
            "final_belief": self.final_belief.to_dict() if self.final_belief else None,
            "final_plan": self.final_plan.to_dict() if self.final_plan else None,
            "step_count": self.step_count,
            "started_at_turn": self.started_at_turn,
            "status": self.status.value,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ReasoningTrace":
        return cls(
            job_id=data["job_id"],
            steps=tuple(TraceStep.from_dict(s) for s in data["steps"]),
            final_belief=BeliefState.from_dict(data["final_belief"]) if data.get("final_belief") else None,
            final_plan=Plan.from_dict(data["final_plan"]) if data.get("final_plan") else None,
            step_count=int(data["step_count"]),
            started_at_turn=int(data["started_at_turn"]),
            status=JobStatus(data["status"]),
        )


def trace_violations(trace: ReasoningTrace, max_steps: int | None = None) -> list[str]:
    """Check a trace against its structural invariants.

    Returns a list of human-readable violations, empty when the trace is
    well-formed. Superseded and failed traces are checked only up to their
    truncation point (pairing and count rules, not the terminal-extraction
    rule).
    """
    problems: list[str] = []
    if trace.step_count != len(trace.steps):
        problems.append(f"step_count {trace.step_count} != recorded steps {len(trace.steps)}")
    for i, step in enumerate(trace.steps):
        if step.action.kind is ActionKind.TOOL_CALL:
            if step.observation is None or step.observation.source is not ObservationSource.TOOL:
                problems.append(f"step {i}: tool call not followed by a tool observation")
        elif step.observation is not None:
            problems.append(f"step {i}: non-tool step carries an observation")
    if trace.status is JobStatus.COMPLETED:
        if trace.step_count < 1:
            problems.append("completed trace must have at least one step")
        if trace.steps and trace.steps[-1].action.kind is not ActionKind.BELIEF_EXTRACTION:
            problems.append("last step of a completed trace must be a belief extraction")
        if trace.final_belief is None:
            problems.append("completed trace must carry a final belief")
        if max_steps is not None and trace.step_count > max_steps:
            problems.append(f"step_count {trace.step_count} exceeds max_steps {max_steps}")
    return problems
