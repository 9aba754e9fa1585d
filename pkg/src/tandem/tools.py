"""Reference tool implementations for the coaching configuration.

The SEARCH tool is backed by a local fixture catalog (a JSON list of
resources with tags) so the whole test suite runs hermetically. A live
search client can be registered under the same tool name in deployment.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from .core import Resource, canonical_json


class ToolError(Exception):
    pass


class CatalogMissing(ToolError):
    pass


@dataclass(frozen=True)
class ToolResult:
    """Tool output in two shapes: text for the reasoning context, data for
    structured consumers like the plan builder."""

    content: str
    data: Any = None


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    argument_schema: Mapping[str, str]
    handler: Callable[[Mapping[str, str]], ToolResult]


class ToolRegistry:
    def __init__(self) -> None:
        self._tools: dict[str, ToolSpec] = {}

    def register(self, spec: ToolSpec) -> None:
        if spec.name in self._tools:
            raise ToolError(f"tool {spec.name!r} already registered")
        self._tools[spec.name] = spec

    def names(self) -> tuple[str, ...]:
        return tuple(self._tools)

    def resolve(self, name: str) -> ToolSpec:
        try:
            return self._tools[name]
        except KeyError:
            raise ToolError(f"unknown tool {name!r}") from None

    def invoke(self, name: str, arguments: Mapping[str, str]) -> ToolResult:
        spec = self.resolve(name)
        return spec.handler(arguments)


@dataclass(frozen=True)
class CatalogEntry:
    resource: Resource
    tags: tuple[str, ...] = ()


_TOKEN_RE = re.compile(r"[a-z0-9]+")


def _tokens(text: str) -> set[str]:
    return set(_TOKEN_RE.findall(text.lower()))


class ResourceCatalog:
    """Fixture resource catalog with deterministic term-overlap ranking."""

    def __init__(self, entries: Sequence[CatalogEntry]) -> None:
        self.entries = tuple(entries)

    @classmethod
    def load(cls, path: Path | str) -> "ResourceCatalog":
        p = Path(path)
        if not p.exists():
            raise CatalogMissing(str(p))
        try:
            raw = json.loads(p.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CatalogMissing(f"{p}: {exc}") from exc
        entries = []
        for item in raw:
            entries.append(
                CatalogEntry(
                    resource=Resource.from_dict(item),
                    tags=tuple(item.get("tags", [])),
                )
            )
        return cls(entries)

    def search(self, query: str, limit: int) -> list[Resource]:
        """Up to ``limit`` entries ranked by term overlap with the query.

        Ordering is (score desc, catalog order); zero-overlap entries are
        never returned, so an empty query yields an empty result.
        """
        if limit <= 0:
            return []
        query_tokens = _tokens(query)
        if not query_tokens:
            return []
        scored: list[tuple[int, int, Resource]] = []
        for index, entry in enumerate(self.entries):
            entry_tokens = _tokens(entry.resource.title) | _tokens(" ".join(entry.tags))
            score = len(query_tokens & entry_tokens)
            if score > 0:
                scored.append((-score, index, entry.resource))
        scored.sort()
        return [resource for _, _, resource in scored[:limit]]


def make_search_tool(catalog: ResourceCatalog, *, default_limit: int = 3) -> ToolSpec:
    def handler(arguments: Mapping[str, str]) -> ToolResult:
        query = arguments.get("query", "")
        raw_limit = arguments.get("limit", str(default_limit))
        try:
            limit = int(raw_limit)
        except (TypeError, ValueError):
            raise ToolError(f"limit must be an integer, got {raw_limit!r}") from None
        resources = catalog.search(query, limit)
        content = canonical_json([r.to_dict() for r in resources])
        return ToolResult(content=content, data=resources)

    return ToolSpec(
        name="search",
        description="Look up fixture resources by keyword",
        argument_schema={"query": "text", "limit": "integer"},
        handler=handler,
    )


def default_registry(catalog: ResourceCatalog) -> ToolRegistry:
    registry = ToolRegistry()
    registry.register(make_search_tool(catalog))
    return registry
