import json

import pytest
from hypothesis import given, strategies as st

from tandem.core import (
    ActionKind,
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
    Resource,
    Role,
    SchemaErrorReport,
    ToolCall,
    TraceStep,
    Turn,
    bootstrap_belief,
    trace_violations,
    validate_belief,
)

from conftest import make_belief


# ── belief schema ────────────────────────────────────────────────────

APPENDIX_BLOCK = {
    "journey_title": "Sleeping Coaching",
    "primary_concern": "Eliminate distractions (noise and light)",
    "barriers": ["Noisy environment", "Light distractions"],
    "goals": [],
    "recommendations": [
        "Use blackout curtains or blinds",
        "Consider noise-cancelling curtains or soundproofing panels",
        "Avoid blue light",
        "Dimmable lights",
        "Use low-wattage night lights with warm soft colors",
    ],
    "coaching_phase": "PLANNING",
}


def test_validate_belief_accepts_reference_block():
    result = validate_belief(json.dumps(APPENDIX_BLOCK))
    assert isinstance(result, BeliefState)
    assert result.primary_concern == "Eliminate distractions (noise and light)"
    assert result.barriers == ("Noisy environment", "Light distractions")
    assert len(result.recommendations) == 5
    assert result.coaching_phase is CoachingPhase.PLANNING


def test_validate_belief_accepts_bootstrap_shape():
    doc = {
        "journey_title": "Sleeping Coaching",
        "primary_concern": None,
        "barriers": [],
        "goals": [],
        "recommendations": [],
        "coaching_phase": "UNDERSTANDING",
    }
    result = validate_belief(json.dumps(doc))
    assert isinstance(result, BeliefState)
    assert result.barriers == () and result.goals == () and result.recommendations == ()


@pytest.mark.parametrize(
    "phase", ["REFLECTING", "DONE", "understanding!", "PLAN", "", "GOALSETTING"]
)
def test_validate_belief_rejects_unknown_phases(phase):
    # oracle: direct enum membership
    assert phase.strip().upper().replace(" ", "_") not in {p.value for p in CoachingPhase}
    doc = dict(APPENDIX_BLOCK, coaching_phase=phase)
    result = validate_belief(json.dumps(doc))
    assert isinstance(result, SchemaErrorReport)
    assert result.kind == "schema"
    assert any(p.field == "coaching_phase" for p in result.problems)


def test_validate_belief_parse_failure():
    result = validate_belief("{not json")
    assert isinstance(result, SchemaErrorReport)
    assert result.kind == "parse"


def test_validate_belief_reports_every_violation():
    doc = {"coaching_phase": "NOPE", "barriers": "not-a-list", "version": -2}
    result = validate_belief(json.dumps(doc))
    assert isinstance(result, SchemaErrorReport)
    fields = {p.field for p in result.problems}
    assert {"journey_title", "coaching_phase", "barriers", "version"} <= fields


def test_phase_parse_tolerates_spacing():
    assert CoachingPhase.parse("GOAL SETTING") is CoachingPhase.GOAL_SETTING
    assert CoachingPhase.parse(" planning ") is CoachingPhase.PLANNING


def test_belief_lists_deduplicate_preserving_order():
    belief = make_belief(barriers=("b", "a", "b", "c", "a"))
    assert belief.barriers == ("b", "a", "c")


def test_bootstrap_belief_is_pinned():
    b = bootstrap_belief("s9", "Sleeping Coaching")
    assert b.version == 0
    assert b.coaching_phase is CoachingPhase.UNDERSTANDING
    assert b.produced_by is BeliefSource.BOOTSTRAP
    assert b.barriers == () and b.goals == () and b.recommendations == ()


# ── round-trip property ──────────────────────────────────────────────

texts = st.text(min_size=1, max_size=30).filter(lambda s: s.strip() == s and s)
str_lists = st.lists(texts, max_size=5)


@st.composite
def beliefs(draw):
    return BeliefState(
        session_id=draw(st.sampled_from(["s1", "s2", ""])),
        journey_title=draw(texts),
        coaching_phase=draw(st.sampled_from(list(CoachingPhase))),
        primary_concern=draw(st.none() | texts),
        barriers=tuple(draw(str_lists)),
        goals=tuple(draw(str_lists)),
        recommendations=tuple(draw(str_lists)),
        plan_ref=draw(st.none() | st.just("plan-s1")),
        produced_by=draw(st.sampled_from(list(BeliefSource))),
        produced_at_turn=draw(st.integers(min_value=-1, max_value=100)),
        version=draw(st.none() | st.integers(min_value=0, max_value=50)),
    )


@given(beliefs())
def test_belief_round_trip_identity(belief):
    assert validate_belief(belief.to_json()) == belief


# ── the action union ─────────────────────────────────────────────────

def test_action_exactly_one_variant():
    with pytest.raises(ValueError):
        AugmentedAction()
    with pytest.raises(ValueError):
        AugmentedAction(thought="x", utterance="y")


def test_action_dispatch_is_exhaustive():
    actions = [
        AugmentedAction.think("t"),
        AugmentedAction.act("search", {"query": "q"}),
        AugmentedAction.extract(make_belief()),
        AugmentedAction.say("hello"),
    ]
    seen = set()
    for action in actions:
        match action.kind:
            case ActionKind.THOUGHT:
                assert action.thought == "t"
            case ActionKind.TOOL_CALL:
                assert action.tool_call == ToolCall("search", {"query": "q"})
            case ActionKind.BELIEF_EXTRACTION:
                assert action.belief_extraction is not None
            case ActionKind.UTTERANCE:
                assert action.utterance == "hello"
        seen.add(action.kind)
    assert seen == set(ActionKind)


def test_action_serialization_round_trip():
    for action in (
        AugmentedAction.think("t"),
        AugmentedAction.act("search", {"query": "q"}),
        AugmentedAction.extract(make_belief(version=3)),
        AugmentedAction.say("hi"),
    ):
        assert AugmentedAction.from_dict(action.to_dict()) == action


def test_tool_call_requires_name():
    with pytest.raises(ValueError):
        ToolCall("")


# ── observations and turns ───────────────────────────────────────────

def test_user_observation_requires_content():
    with pytest.raises(ValueError):
        Observation(source=ObservationSource.USER, content="")
    Observation(source=ObservationSource.TOOL, content="")  # tools may return nothing


def test_turn_round_trip():
    turn = Turn(3, Role.AGENT, "hello", 123.5, belief_version_used=2, latency_ms=11.25)
    assert Turn.from_dict(turn.to_dict()) == turn


# ── plans ────────────────────────────────────────────────────────────

def test_plan_revision_requires_steps():
    with pytest.raises(ValueError):
        Plan(plan_id="p", steps=(), revision=1, derived_from_version=1)


def test_plan_round_trip():
    plan = Plan(
        plan_id="plan-s1",
        steps=(
            PlanStep("A", "do a", (Resource("u://1", "One", "src", "because"),)),
            PlanStep("B", "do b"),
        ),
        revision=2,
        derived_from_version=3,
    )
    assert Plan.from_dict(plan.to_dict()) == plan


def test_resource_requires_uri_and_title():
    with pytest.raises(ValueError):
        Resource(uri="", title="x")
    with pytest.raises(ValueError):
        Resource(uri="u://1", title="")


# ── traces ───────────────────────────────────────────────────────────

def _tool_step(content="ok"):
    return TraceStep(
        AugmentedAction.act("search", {"query": "q"}),
        Observation(source=ObservationSource.TOOL, content=content, turn_id=0),
    )


def _extract_step():
    return TraceStep(AugmentedAction.extract(make_belief()))


def test_trace_well_formed():
    trace = ReasoningTrace(
        job_id="job-1",
        steps=(TraceStep(AugmentedAction.think("t")), _tool_step(), _extract_step()),
        final_belief=make_belief(version=1),
        final_plan=None,
        step_count=3,
        started_at_turn=0,
        status=JobStatus.COMPLETED,
    )
    assert trace_violations(trace, max_steps=8) == []


def test_trace_violations_detected():
    bad = ReasoningTrace(
        job_id="job-2",
        steps=(TraceStep(AugmentedAction.act("search", {"query": "q"})),),  # no observation
        final_belief=None,
        final_plan=None,
        step_count=2,  # wrong count
        started_at_turn=0,
        status=JobStatus.COMPLETED,
    )
    problems = trace_violations(bad)
    assert any("tool call" in p for p in problems)
    assert any("step_count" in p for p in problems)
    assert any("belief extraction" in p for p in problems)


def test_superseded_trace_may_truncate():
    trace = ReasoningTrace(
        job_id="job-3",
        steps=(TraceStep(AugmentedAction.think("t")), _tool_step()),
        final_belief=None,
        final_plan=None,
        step_count=2,
        started_at_turn=4,
        status=JobStatus.SUPERSEDED,
    )
    assert trace_violations(trace) == []


def test_trace_serialization_round_trip():
    trace = ReasoningTrace(
        job_id="job-4",
        steps=(TraceStep(AugmentedAction.think("t")), _extract_step()),
        final_belief=make_belief(version=2),
        final_plan=None,
        step_count=2,
        started_at_turn=1,
        status=JobStatus.COMPLETED,
    )
    assert ReasoningTrace.from_dict(json.loads(trace.to_json())) == trace
