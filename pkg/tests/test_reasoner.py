import asyncio
import json
import time

import pytest
from hypothesis import given, settings, strategies as st

from tandem.coaching import (
    BELIEF_SCHEMA_REF,
    classifier_instructions,
    extractor_instructions,
    mini_reasoner_configs,
)
from tandem.config import RuntimeConfig
from tandem.core import (
    ActionKind,
    BeliefSource,
    CoachingPhase,
    JobStatus,
    Observation,
    ObservationSource,
    Plan,
    PlanStep,
    Role,
    Turn,
    trace_violations,
)
from tandem.gateway import CancellationToken, ModelGateway, ScriptedBackend, ScriptedRule
from tandem.memory import MemorySnapshot
from tandem.reasoner import (
    ExtractionFailed,
    MiniReasonerConfig,
    Reasoner,
    ReasoningJobSpec,
    compose_belief,
    parse_step,
)
from tandem.tools import ResourceCatalog, default_registry

from conftest import FIXTURES, make_belief, run

CATALOG = ResourceCatalog.load(FIXTURES / "catalog.json")

VALID_DOC = json.dumps(
    {
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
)


def make_reasoner(rules, *, max_steps=8, config=None):
    config = config or RuntimeConfig(max_steps=max_steps)
    gateway = ModelGateway(retries=0, backoff_s=0.01)
    all_rules = list(rules)
    if not all_rules or not all_rules[-1].is_catch_all:
        all_rules.append(ScriptedRule(role="any", pattern="", response="THOUGHT: fallthrough"))
    gateway.register("scripted", ScriptedBackend(all_rules))
    return Reasoner(
        gateway,
        default_registry(CATALOG),
        mini_reasoner_configs(config.max_steps),
        config,
        classifier_instructions=classifier_instructions(),
        extractor_instructions=extractor_instructions(),
    )


def snapshot(belief=None, history=(), plan=None):
    return MemorySnapshot(
        belief=belief or make_belief(version=0, produced_by=BeliefSource.BOOTSTRAP),
        plan=plan,
        history_window=tuple(history),
        snapshot_at=time.time(),
    )


def spec_for(text="help me sleep", turn_id=0, snap=None, note=None):
    return ReasoningJobSpec(
        job_id="job-s1-1",
        session_id="s1",
        trigger=Observation(source=ObservationSource.USER, content=text, turn_id=turn_id),
        snapshot=snap or snapshot(),
        classifier_note=note,
    )


# ── step protocol ────────────────────────────────────────────────────

@pytest.mark.parametrize(
    "response,kind",
    [
        ("THOUGHT: thinking about it", "thought"),
        ('ACT: search(query="calm colors", limit="2")', "act"),
        ('EXTRACT: {"coaching_phase": "PLANNING"}', "extract"),
        ("free-form rambling", "thought"),
        ("ACT: broken(no quotes", "thought"),
    ],
)
def test_parse_step_kinds(response, kind):
    assert parse_step(response)[0] == kind


def test_parse_step_act_arguments():
    kind, payload = parse_step('ACT: search(query="white noise", limit="2")')
    assert kind == "act"
    assert payload == ("search", {"query": "white noise", "limit": "2"})


# ── phase classification ─────────────────────────────────────────────

def _history(*texts):
    return tuple(Turn(i, Role.USER, t, float(i)) for i, t in enumerate(texts))


@pytest.mark.parametrize(
    "text,expected",
    [
        ("Can you now help me set goals around eliminating anxious thoughts?", "GOAL_SETTING"),
        ("Can you help create a plan for me to eliminate these distractions?", "PLANNING"),
        ("Hey what's up?", "UNDERSTANDING"),
    ],
)
def test_classify_reference_utterances(text, expected):
    rules = [
        ScriptedRule(role="reasoner_classifier", pattern="set goals", response="GOAL SETTING"),
        ScriptedRule(role="reasoner_classifier", pattern="create a plan", response="PLANNING"),
        ScriptedRule(role="reasoner_classifier", pattern="", response="UNDERSTANDING"),
    ]
    reasoner = make_reasoner(rules)
    decision = run(reasoner.classify_phase(_history(text), make_belief()))
    assert decision.phase is CoachingPhase(expected)
    assert not decision.fallback_used


def test_classify_repairs_once_then_falls_back():
    # first answer garbage, repair prompt gets a valid one
    rules = [
        ScriptedRule(role="reasoner_classifier", pattern="was invalid", response="PLANNING"),
        ScriptedRule(role="reasoner_classifier", pattern="", response="hmm, probably planning?"),
    ]
    reasoner = make_reasoner(rules)
    decision = run(reasoner.classify_phase(_history("x"), make_belief()))
    assert decision.phase is CoachingPhase.PLANNING
    assert not decision.fallback_used

    # garbage twice: fall back to the current belief's phase
    rules = [ScriptedRule(role="reasoner_classifier", pattern="", response="no idea")]
    reasoner = make_reasoner(rules)
    belief = make_belief(coaching_phase=CoachingPhase.GOAL_SETTING)
    decision = run(reasoner.classify_phase(_history("x"), belief))
    assert decision.phase is CoachingPhase.GOAL_SETTING
    assert decision.fallback_used


# ── belief extraction and repair ─────────────────────────────────────

def test_extract_belief_success_without_repair():
    rules = [ScriptedRule(role="extractor", pattern="", response=VALID_DOC)]
    reasoner = make_reasoner(rules)
    result = run(reasoner.extract_belief("transcript about noise and light", BELIEF_SCHEMA_REF))
    assert result.repairs == 0
    assert result.belief.primary_concern == "Eliminate distractions (noise and light)"


def test_extract_belief_repairs_malformed_document():
    rules = [
        ScriptedRule(role="extractor", pattern="SCHEMA ERRORS", response=VALID_DOC),
        ScriptedRule(role="extractor", pattern="", response='{"coaching_phase": "REFLECTING"}'),
    ]
    reasoner = make_reasoner(rules)
    result = run(reasoner.extract_belief("transcript", BELIEF_SCHEMA_REF))
    assert result.repairs == 1
    assert result.belief.coaching_phase is CoachingPhase.PLANNING


def test_extract_belief_exhausts_repair_budget():
    rules = [ScriptedRule(role="extractor", pattern="", response="not json at all")]
    reasoner = make_reasoner(rules)
    with pytest.raises(ExtractionFailed):
        run(reasoner.extract_belief("transcript", BELIEF_SCHEMA_REF))


# ── belief composition ───────────────────────────────────────────────

def test_compose_empty_is_identity():
    previous = make_belief(version=3, barriers=("A",))
    assert compose_belief([], previous) == previous


def test_compose_ordered_union():
    previous = make_belief(version=1, barriers=("A",))
    intermediates = [
        make_belief(barriers=("B",)),
        make_belief(barriers=("A", "C")),
    ]
    merged = compose_belief(intermediates, previous)
    assert merged.barriers == ("A", "B", "C")
    assert merged.version is None


def test_compose_reproduces_reference_update():
    previous = make_belief(version=1)  # understanding phase, nothing known
    intermediate = make_belief(
        primary_concern="Eliminate distractions (noise and light)",
        barriers=("Noisy environment", "Light distractions"),
        recommendations=(
            "Use blackout curtains or blinds",
            "Consider noise-cancelling curtains or soundproofing panels",
            "Avoid blue light",
            "Dimmable lights",
            "Use low-wattage night lights with warm soft colors",
        ),
        coaching_phase=CoachingPhase.PLANNING,
        produced_at_turn=2,
    )
    merged = compose_belief([intermediate], previous)
    assert merged.coaching_phase is CoachingPhase.PLANNING
    assert merged.primary_concern == "Eliminate distractions (noise and light)"
    assert merged.barriers == ("Noisy environment", "Light distractions")
    assert len(merged.recommendations) == 5
    # strictly superset in populated fields
    assert set(previous.barriers) <= set(merged.barriers)


def reference_compose(intermediates, previous):
    """Brute-force oracle: naive last-writer scalars, naive ordered union."""
    if not intermediates:
        return previous
    out = {}
    for name in ("journey_title", "primary_concern", "plan_ref"):
        value = getattr(previous, name)
        for b in intermediates:
            if getattr(b, name):
                value = getattr(b, name)
        out[name] = value
    for name in ("barriers", "goals", "recommendations"):
        seen = []
        for b in [previous, *intermediates]:
            for item in getattr(b, name):
                if item not in seen:
                    seen.append(item)
        out[name] = tuple(seen)
    return make_belief(
        session_id=previous.session_id,
        coaching_phase=intermediates[-1].coaching_phase,
        produced_by=BeliefSource.REASONER,
        produced_at_turn=intermediates[-1].produced_at_turn,
        version=None,
        **out,
    )


small_items = st.sampled_from(["A", "B", "C", "D", "E", "F"])
small_lists = st.lists(small_items, max_size=6).map(tuple)


@st.composite
def small_beliefs(draw):
    return make_belief(
        coaching_phase=draw(st.sampled_from(list(CoachingPhase))),
        primary_concern=draw(st.none() | st.sampled_from(["x", "y", ""])),
        barriers=draw(small_lists),
        goals=draw(small_lists),
        recommendations=draw(small_lists),
        plan_ref=draw(st.none() | st.just("plan-s1")),
        produced_at_turn=draw(st.integers(0, 5)),
        version=None,
    )


@settings(max_examples=300, deadline=None)
@given(intermediates=st.lists(small_beliefs(), max_size=4), previous=small_beliefs())
def test_compose_matches_bruteforce_oracle(intermediates, previous):
    previous = previous.with_version(1)
    assert compose_belief(intermediates, previous) == reference_compose(intermediates, previous)


@given(intermediates=st.lists(small_beliefs(), min_size=1, max_size=3), previous=small_beliefs())
def test_compose_is_idempotent_and_monotone(intermediates, previous):
    previous = previous.with_version(1)
    once = compose_belief(intermediates, previous)
    twice = compose_belief(intermediates, previous)
    assert once == twice
    for name in ("barriers", "goals", "recommendations"):
        assert set(getattr(previous, name)) <= set(getattr(once, name))


# ── the reasoning loop ───────────────────────────────────────────────

THREE_STEP_RULES = [
    ScriptedRule(role="reasoner_step", pattern="OBSERVATION:", response="EXTRACT: " + VALID_DOC, latency_ms=2),
    ScriptedRule(role="reasoner_step", pattern="THOUGHT: gather", response='ACT: search(query="blackout curtains noise", limit="2")', latency_ms=2),
    ScriptedRule(role="reasoner_step", pattern="", response="THOUGHT: gather environment fixes", latency_ms=2),
    ScriptedRule(role="reasoner_step", pattern="PLAN REQUEST:", response="{}"),
]


def planning_mini(max_steps=8):
    return mini_reasoner_configs(max_steps)[CoachingPhase.PLANNING]


def test_three_step_run_shape():
    rules = [
        ScriptedRule(role="reasoner_step", pattern="PLAN REQUEST:", response=json.dumps({"steps": [{"title": "Block the noise", "description": "d"}]})),
        *THREE_STEP_RULES[:3],
    ]
    reasoner = make_reasoner(rules)
    trace = run(reasoner.run_reasoning(spec_for(), planning_mini()))
    assert trace.status is JobStatus.COMPLETED
    assert trace.step_count == 3
    kinds = [s.action.kind for s in trace.steps]
    assert kinds == [ActionKind.THOUGHT, ActionKind.TOOL_CALL, ActionKind.BELIEF_EXTRACTION]
    assert trace.steps[1].observation is not None
    assert trace.steps[1].observation.source is ObservationSource.TOOL
    assert trace_violations(trace, max_steps=8) == []
    assert trace.final_belief is not None and trace.final_belief.version is None
    assert trace.final_plan is not None and trace.final_plan.revision == 1


def test_max_steps_one_forces_extraction():
    understanding_doc = json.dumps(
        {"journey_title": "Sleeping Coaching", "coaching_phase": "UNDERSTANDING"}
    )
    rules = [ScriptedRule(role="extractor", pattern="", response=understanding_doc)]
    reasoner = make_reasoner(rules, max_steps=1)
    mini = MiniReasonerConfig(
        phase=CoachingPhase.UNDERSTANDING,
        step_instructions="x",
        extraction_schema_ref=BELIEF_SCHEMA_REF,
        max_steps=1,
    )
    trace = run(reasoner.run_reasoning(spec_for(), mini))
    assert trace.status is JobStatus.COMPLETED
    assert trace.step_count == 1
    assert trace.steps[0].action.kind is ActionKind.BELIEF_EXTRACTION


def test_planning_run_produces_reference_belief():
    rules = [
        ScriptedRule(role="reasoner_step", pattern="PLAN REQUEST:", response=json.dumps({"steps": [{"title": "t", "description": "d"}]})),
        *THREE_STEP_RULES[:3],
    ]
    reasoner = make_reasoner(rules)
    trace = run(reasoner.run_reasoning(spec_for("eliminate distractions"), planning_mini()))
    belief = trace.final_belief
    assert belief.barriers == ("Noisy environment", "Light distractions")
    assert len(belief.recommendations) == 5


def test_tool_error_continues_the_loop():
    rules = [
        ScriptedRule(role="reasoner_step", pattern="ERROR:", response="EXTRACT: " + VALID_DOC),
        ScriptedRule(role="reasoner_step", pattern="PLAN REQUEST:", response=json.dumps({"steps": [{"title": "t"}]})),
        ScriptedRule(role="reasoner_step", pattern="", response='ACT: nosuchtool(query="x")'),
    ]
    reasoner = make_reasoner(rules)
    trace = run(reasoner.run_reasoning(spec_for(), planning_mini()))
    assert trace.status is JobStatus.COMPLETED
    tool_step = trace.steps[0]
    assert tool_step.action.kind is ActionKind.TOOL_CALL
    assert tool_step.observation.content.startswith("ERROR:")
    assert trace_violations(trace) == []


def test_disallowed_tool_is_an_error_observation():
    rules = [
        ScriptedRule(role="reasoner_step", pattern="ERROR:", response="EXTRACT: " + VALID_DOC),
        ScriptedRule(role="reasoner_step", pattern="", response='ACT: search(query="x", limit="2")'),
    ]
    reasoner = make_reasoner(rules)
    mini = MiniReasonerConfig(
        phase=CoachingPhase.UNDERSTANDING,
        step_instructions="x",
        extraction_schema_ref=BELIEF_SCHEMA_REF,
        max_steps=8,
        allowed_tools=(),  # search not allowed here
    )
    trace = run(reasoner.run_reasoning(spec_for(), mini))
    assert trace.steps[0].observation.content.startswith("ERROR:")


def test_cancellation_truncates_between_steps():
    rules = [
        ScriptedRule(role="reasoner_step", pattern="THOUGHT: two", response="THOUGHT: three", latency_ms=500),
        ScriptedRule(role="reasoner_step", pattern="THOUGHT: one", response="THOUGHT: two", latency_ms=30),
        ScriptedRule(role="reasoner_step", pattern="", response="THOUGHT: one", latency_ms=30),
    ]
    reasoner = make_reasoner(rules)
    token = CancellationToken()

    async def scenario():
        task = asyncio.create_task(reasoner.run_reasoning(spec_for(), planning_mini(), cancel=token))
        await asyncio.sleep(0.1)  # let steps one and two land, step three is mid-call
        token.cancel()
        return await task

    trace = run(scenario())
    assert trace.status is JobStatus.SUPERSEDED
    assert trace.step_count == 2
    assert trace.final_belief is None and trace.final_plan is None
    assert trace_violations(trace) == []


def test_failed_extraction_fails_the_run():
    rules = [
        ScriptedRule(role="reasoner_step", pattern="", response="EXTRACT: garbage"),
        ScriptedRule(role="extractor", pattern="", response="still garbage"),
    ]
    reasoner = make_reasoner(rules)
    trace = run(reasoner.run_reasoning(spec_for(), planning_mini()))
    assert trace.status is JobStatus.FAILED
    assert trace.final_belief is None


def test_classifier_note_becomes_leading_thought():
    rules = [ScriptedRule(role="reasoner_step", pattern="", response="EXTRACT: " + VALID_DOC),
             ScriptedRule(role="reasoner_step", pattern="PLAN REQUEST:", response=json.dumps({"steps": [{"title": "t"}]}))]
    rules = [rules[1], rules[0]]
    reasoner = make_reasoner(rules)
    trace = run(reasoner.run_reasoning(spec_for(note="phase classification failed"), planning_mini()))
    assert trace.steps[0].action.kind is ActionKind.THOUGHT
    assert "classification failed" in trace.steps[0].action.thought


# ── plan synthesis and adaptation ────────────────────────────────────

PLAN_DOC = json.dumps(
    {
        "steps": [
            {
                "title": "Choose a calming color palette",
                "description": "Muted tones first.",
                "resource_query": "calming bedroom colors",
                "resource_limit": 2,
            },
            {"title": "Block the noise", "description": "Mask or remove it."},
        ]
    }
)


def test_synthesis_attaches_catalog_resources():
    rules = [ScriptedRule(role="reasoner_step", pattern="PLAN REQUEST:", response=PLAN_DOC)]
    reasoner = make_reasoner(rules)
    plan = run(
        reasoner.synthesize_plan(
            make_belief(coaching_phase=CoachingPhase.PLANNING),
            spec_for("make me a plan"),
            planning_mini(),
            derived_from_version=1,
            plan_id="plan-s1",
        )
    )
    assert plan.revision == 1
    first = plan.steps[0]
    assert len(first.resources) == 2  # fixture-catalog oracle: two color entries
    assert first.resources[0].title == "Calming Bedroom Color Ideas for Better Sleep"
    assert all(r.reasoning for r in first.resources)
    assert plan.steps[1].resources == ()


def test_adaptation_preserves_steps_and_appends_segment():
    existing = Plan(
        plan_id="plan-s1",
        steps=(PlanStep("Block the noise", "Mask it."), PlanStep("Dim the lights", "Warm bulbs.")),
        revision=1,
        derived_from_version=1,
    )
    adapted_doc = json.dumps(
        {
            "steps": [
                {"title": "Block the noise"},
                {"title": "Dim the lights"},
                {
                    "title": "Explore Natural Sounds",
                    "description": "Layer in gentle soundscapes.",
                    "resource_query": "relaxing nature sounds",
                    "resource_limit": 2,
                },
            ]
        }
    )
    rules = [ScriptedRule(role="reasoner_step", pattern="FEEDBACK:", response=adapted_doc)]
    reasoner = make_reasoner(rules)
    feedback = Observation(
        source=ObservationSource.USER,
        content="add in my plan more steps around relaxing sounds",
        feedback_flag=True,
        turn_id=4,
    )
    plan = run(reasoner.adapt_plan(existing, feedback, planning_mini(), derived_from_version=2))
    assert plan.revision == 2
    assert plan.plan_id == existing.plan_id
    assert plan.steps[0] is existing.steps[0]  # untouched steps preserved by identity
    assert plan.steps[1] is existing.steps[1]
    assert plan.steps[2].title == "Explore Natural Sounds"
    assert len(plan.steps[2].resources) == 2


def test_adapt_rejects_empty_feedback():
    existing = Plan(
        plan_id="plan-s1",
        steps=(PlanStep("Block the noise", "Mask it."),),
        revision=1,
        derived_from_version=1,
    )
    reasoner = make_reasoner([])
    feedback = Observation(source=ObservationSource.TOOL, content="   ", turn_id=1)
    with pytest.raises(ValueError):
        run(reasoner.adapt_plan(existing, feedback, planning_mini(), derived_from_version=2))
