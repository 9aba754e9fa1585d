"""Wires the modules into a runnable coaching runtime."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import coaching
from .config import RuntimeConfig
from .gateway import ModelGateway, RemoteBackend, ScriptedBackend, ScriptedRule, load_ruleset
from .memory import MemoryStore
from .orchestrator import Orchestrator
from .reasoner import Reasoner
from .talker import Talker
from .tools import ResourceCatalog, ToolRegistry, default_registry


@dataclass
class CoachRuntime:
    config: RuntimeConfig
    memory: MemoryStore
    gateway: ModelGateway
    tools: ToolRegistry
    talker: Talker
    reasoner: Reasoner
    orchestrator: Orchestrator

    async def create_session(self, session_id: str | None = None):
        return await self.orchestrator.create_session(session_id)

    async def turn(self, session_id: str, text: str, **kwargs):
        return await self.orchestrator.handle_user_turn(session_id, text, **kwargs)

    async def wait_for_job(self, job_id: str, timeout: float | None = None):
        return await self.orchestrator.wait_for_job(job_id, timeout)

    async def aclose(self) -> None:
        await self.orchestrator.aclose()


def build_runtime(
    config: RuntimeConfig,
    *,
    rules: Sequence[ScriptedRule] | None = None,
    registry: ToolRegistry | None = None,
) -> CoachRuntime:
    """Assemble a runtime from configuration.

    ``rules`` overrides the scripted ruleset fixture; tests and the harness
    pass rules directly, the service loads them from the fixtures dir.
    """
    memory = MemoryStore(
        config.storage_dir,
        journey_title=config.journey_title,
        history_window=config.history_window_k,
    )
    gateway = ModelGateway(retries=config.gateway_retries, backoff_s=config.gateway_backoff_s)

    needs_scripted = "scripted" in {
        config.talker_backend,
        config.reasoner_backend,
        config.classifier_backend,
        config.extractor_backend,
    }
    if rules is not None:
        gateway.register("scripted", ScriptedBackend(rules))
    elif needs_scripted:
        gateway.register("scripted", ScriptedBackend(load_ruleset(config.resolved_ruleset_path())))
    if config.remote_url:
        gateway.register(
            "remote",
            RemoteBackend(config.remote_url, config.remote_model, timeout_s=config.remote_timeout_s),
        )

    if registry is None:
        catalog_path = config.resolved_catalog_path()
        catalog = ResourceCatalog.load(catalog_path) if Path(catalog_path).exists() else ResourceCatalog([])
        registry = default_registry(catalog)

    instruction_set = coaching.sleep_coaching_instructions()
    talker = Talker(gateway, memory, instruction_set, config)
    reasoner = Reasoner(
        gateway,
        registry,
        coaching.mini_reasoner_configs(config.max_steps),
        config,
        classifier_instructions=coaching.classifier_instructions(),
        extractor_instructions=coaching.extractor_instructions(),
    )
    orchestrator = Orchestrator(memory, talker, reasoner, config)
    return CoachRuntime(
        config=config,
        memory=memory,
        gateway=gateway,
        tools=registry,
        talker=talker,
        reasoner=reasoner,
        orchestrator=orchestrator,
    )
