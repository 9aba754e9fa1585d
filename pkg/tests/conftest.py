import asyncio
from pathlib import Path

import pytest

from tandem.config import RuntimeConfig
from tandem.core import BeliefState, CoachingPhase
from tandem.gateway import ScriptedRule
from tandem.runtime import build_runtime
from tandem.tools import ResourceCatalog, default_registry

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def run(coro):
    """Drive a coroutine to completion on a fresh event loop."""
    return asyncio.run(coro)


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def catalog() -> ResourceCatalog:
    return ResourceCatalog.load(FIXTURES / "catalog.json")


def make_belief(**overrides) -> BeliefState:
    defaults = dict(
        session_id="s1",
        journey_title="Sleeping Coaching",
        coaching_phase=CoachingPhase.UNDERSTANDING,
    )
    defaults.update(overrides)
    return BeliefState(**defaults)


CATCH_ALL = ScriptedRule(role="any", pattern="", response="THOUGHT: fallthrough")


def scripted_runtime(rules, *, catalog_path=FIXTURES / "catalog.json", **config_overrides):
    """Runtime wired to an in-memory scripted backend; rules get a terminal
    catch-all appended automatically."""
    config = RuntimeConfig().with_overrides(config_overrides) if config_overrides else RuntimeConfig()
    registry = default_registry(ResourceCatalog.load(catalog_path))
    all_rules = list(rules)
    if not all_rules or not all_rules[-1].is_catch_all:
        all_rules.append(CATCH_ALL)
    return build_runtime(config, rules=all_rules, registry=registry)
