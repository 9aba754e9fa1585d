"""Reference sleep-coaching configuration.

Instruction texts are fixture content for the reference agent, not
clinical guidance. The belief schema name ties the extraction contract to
the validator in core.
"""

from __future__ import annotations

from .core import CoachingPhase, InstructionSet
from .reasoner import MiniReasonerConfig

BELIEF_SCHEMA_REF = "sleep_coaching_v1"

DEFAULT_JOURNEY_TITLE = "Sleeping Coaching"

_CONSTITUTION = """\
You are a supportive sleep coach. Be warm, concise, and practical.
Ground every suggestion in widely accepted sleep hygiene practice, never
diagnose, and recommend a clinician for anything that sounds medical.
Ask at most one question per reply."""

_UNDERSTANDING = """\
Phase: understanding. Learn about the user's sleep situation. Draw out
their main concern, environment, habits, and obstacles with open
questions. Do not propose plans yet."""

_GOAL_SETTING = """\
Phase: goal setting. Help the user turn what you know about their
situation into one or two small, concrete, achievable goals. Confirm each
goal back to them."""

_PLANNING = """\
Phase: planning. Walk the user through their multi-step plan. Present one
step at a time with its resources, invite feedback, and fold their
feedback into the plan rather than starting over."""

_CLASSIFIER = """\
Decide which coaching phase the conversation is in right now. Answer with
exactly one word: UNDERSTANDING, GOAL_SETTING, or PLANNING."""

_EXTRACTOR = """\
Extract everything known about the user into a JSON document with fields:
journey_title, primary_concern, barriers, goals, recommendations,
coaching_phase. Lists hold short text entries; coaching_phase is one of
UNDERSTANDING, GOAL_SETTING, PLANNING. Return the JSON document only."""

_STEP_UNDERSTANDING = """\
Reason about what the user has shared so far and what is still unknown.
One step per reply: THOUGHT: <text>, or EXTRACT: <belief JSON> when you
have consolidated what you know."""

_STEP_GOAL_SETTING = """\
Reason about which goals fit the user's situation. One step per reply:
THOUGHT: <text>, or EXTRACT: <belief JSON> including the goals list."""

_STEP_PLANNING = """\
Build or revise the user's coaching plan. One step per reply: THOUGHT:
<text>, ACT: search(query="...", limit="2") to find resources, or
EXTRACT: <belief JSON>. When asked for a PLAN REQUEST, answer with a JSON
document {"steps": [{"title", "description", "resource_query"}]}."""


def sleep_coaching_instructions() -> InstructionSet:
    return InstructionSet(
        name="sleep_coaching",
        constitution=_CONSTITUTION,
        phase_instructions={
            CoachingPhase.UNDERSTANDING: _UNDERSTANDING,
            CoachingPhase.GOAL_SETTING: _GOAL_SETTING,
            CoachingPhase.PLANNING: _PLANNING,
        },
        belief_schema_ref=BELIEF_SCHEMA_REF,
    )


def classifier_instructions() -> str:
    return _CLASSIFIER


def extractor_instructions() -> str:
    return _EXTRACTOR


def mini_reasoner_configs(max_steps: int = 8) -> dict[CoachingPhase, MiniReasonerConfig]:
    return {
        CoachingPhase.UNDERSTANDING: MiniReasonerConfig(
            phase=CoachingPhase.UNDERSTANDING,
            step_instructions=_STEP_UNDERSTANDING,
            extraction_schema_ref=BELIEF_SCHEMA_REF,
            max_steps=max_steps,
            allowed_tools=(),
        ),
        CoachingPhase.GOAL_SETTING: MiniReasonerConfig(
            phase=CoachingPhase.GOAL_SETTING,
            step_instructions=_STEP_GOAL_SETTING,
            extraction_schema_ref=BELIEF_SCHEMA_REF,
            max_steps=max_steps,
            allowed_tools=(),
        ),
        CoachingPhase.PLANNING: MiniReasonerConfig(
            phase=CoachingPhase.PLANNING,
            step_instructions=_STEP_PLANNING,
            extraction_schema_ref=BELIEF_SCHEMA_REF,
            max_steps=max_steps,
            allowed_tools=("search",),
        ),
    }
