"""Runtime configuration.

Everything tunable lives here; the defaults reproduce the reference
coaching agent. Decode temperatures are configuration choices, not fixed
by the architecture. Config files are YAML or JSON mappings with the same
key names as the dataclass fields.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping


@dataclass(frozen=True)
class RuntimeConfig:
    # coordination
    gate_enabled: bool = True
    wait_phases: tuple[str, ...] = ("PLANNING",)
    gate_timeout_ms: float = 30_000.0
    reasoner_trigger_policy: str = "every_turn"  # every_turn | gated_only

    # memory
    history_window_k: int = 20
    journey_title: str = "Sleeping Coaching"
    storage_dir: str | None = None

    # backends, per calling role
    talker_backend: str = "scripted"
    reasoner_backend: str = "scripted"
    classifier_backend: str = "scripted"
    extractor_backend: str = "scripted"

    # decode parameters
    talker_temperature: float = 0.7
    reasoner_temperature: float = 0.2
    max_tokens: int = 1024

    # reasoning loop
    max_steps: int = 8
    extraction_repair_retries: int = 2

    # remote backend
    remote_url: str = ""
    remote_model: str = ""
    remote_timeout_s: float = 30.0
    gateway_retries: int = 2
    gateway_backoff_s: float = 0.25

    # fixtures
    fixtures_dir: str = "fixtures"
    ruleset_path: str | None = None
    catalog_path: str | None = None

    # talker fallback when the backend is down
    fallback_utterance: str = (
        "I'm sorry, I'm having trouble forming a reply right now. "
        "Could you give me a moment and say that again?"
    )

    def resolved_catalog_path(self) -> Path:
        if self.catalog_path:
            return Path(self.catalog_path)
        return Path(self.fixtures_dir) / "catalog.json"

    def resolved_ruleset_path(self) -> Path:
        if self.ruleset_path:
            return Path(self.ruleset_path)
        return Path(self.fixtures_dir) / "rulesets" / "appendix.yaml"

    def with_overrides(self, overrides: Mapping[str, Any]) -> "RuntimeConfig":
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cleaned = dict(overrides)
        if "wait_phases" in cleaned:
            cleaned["wait_phases"] = tuple(cleaned["wait_phases"])
        return replace(self, **cleaned)


def load_config(path: Path | str | None) -> RuntimeConfig:
    if path is None:
        return RuntimeConfig()
    import yaml

    raw = Path(path).read_text(encoding="utf-8")
    data = yaml.safe_load(raw) if str(path).endswith((".yaml", ".yml")) else json.loads(raw)
    if data is None:
        return RuntimeConfig()
    if not isinstance(data, Mapping):
        raise ValueError("config file must hold a mapping")
    return RuntimeConfig().with_overrides(data)
