"""tandem: a dual-agent conversational runtime.

A fast talking agent answers every user turn from the newest committed
belief snapshot while a slow reasoning agent updates beliefs and plans in
the background; the two coordinate only through versioned shared memory
and a phase-conditioned wait gate.
"""

from .config import RuntimeConfig, load_config
from .core import (
    AugmentedAction,
    BeliefState,
    CoachingPhase,
    Observation,
    Plan,
    ReasoningTrace,
    Turn,
    bootstrap_belief,
    validate_belief,
)
from .memory import MemorySnapshot, MemoryStore
from .orchestrator import GateDecision, Orchestrator, TalkerOutcome, wait_gate
from .reasoner import Reasoner, compose_belief
from .runtime import CoachRuntime, build_runtime
from .talker import Talker

__all__ = [
    "AugmentedAction",
    "BeliefState",
    "CoachingPhase",
    "CoachRuntime",
    "GateDecision",
    "MemorySnapshot",
    "MemoryStore",
    "Observation",
    "Orchestrator",
    "Plan",
    "Reasoner",
    "ReasoningTrace",
    "RuntimeConfig",
    "Talker",
    "TalkerOutcome",
    "Turn",
    "bootstrap_belief",
    "build_runtime",
    "compose_belief",
    "load_config",
    "validate_belief",
    "wait_gate",
]
