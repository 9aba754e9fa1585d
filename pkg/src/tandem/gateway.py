"""Uniform interface to generative language models.

Two backends ship with the runtime: a deterministic scripted backend used
by every test and scenario, and a remote backend speaking a
chat-completions style HTTP API. Both support mid-call cancellation via a
CancellationToken so an in-flight reasoning job can be superseded without
waiting out its model calls.

Scripted rulesets load from a versioned YAML/JSON fixture file:

    format_version: 1
    rules:
      - role: talker                # talker | reasoner_classifier |
                                    # reasoner_step | extractor | any
        pattern: "Hey what's up?"   # substring, or regex with regex: true
        response: "..."
        latency_ms: 10

Rules are ordered and first match wins; the last rule must be an
any-role catch-all (empty pattern) so every request terminates.
"""

from __future__ import annotations

import asyncio
import json
import os
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, AsyncIterator, Mapping, Protocol, Sequence

import httpx

ROLES = ("talker", "reasoner_classifier", "reasoner_step", "extractor")


class GatewayError(Exception):
    pass


class BackendUnavailable(GatewayError):
    """Transient backend failure; the gateway retries these."""


class GatewayTimeout(GatewayError):
    pass


class ScriptError(GatewayError):
    """Bad scripted fixture: no matching rule or malformed ruleset."""


class OperationCancelled(Exception):
    """Raised out of a gateway call when its cancellation token fires."""


class CancellationToken:
    """One-shot cooperative cancellation signal."""

    def __init__(self) -> None:
        self._event = asyncio.Event()

    def cancel(self) -> None:
        self._event.set()

    @property
    def cancelled(self) -> bool:
        return self._event.is_set()

    async def wait(self) -> None:
        await self._event.wait()

    def raise_if_cancelled(self) -> None:
        if self.cancelled:
            raise OperationCancelled()


async def cancellable_sleep(seconds: float, cancel: CancellationToken | None) -> None:
    """Sleep, aborting with OperationCancelled the moment the token fires."""
    if cancel is None:
        await asyncio.sleep(seconds)
        return
    cancel.raise_if_cancelled()
    try:
        await asyncio.wait_for(cancel.wait(), timeout=seconds)
    except asyncio.TimeoutError:
        return
    raise OperationCancelled()


class OutputContract(Enum):
    FREE_TEXT = "FREE_TEXT"
    STRUCTURED_DOCUMENT = "STRUCTURED_DOCUMENT"


@dataclass(frozen=True)
class DecodeParams:
    max_tokens: int = 1024
    temperature: float = 0.7
    seed: int | None = None


@dataclass(frozen=True)
class ModelRequest:
    """One model invocation: instructions plus assembled context.

    ``role`` names which agent surface is calling; the scripted backend
    matches rules against it.
    """

    backend_ref: str
    role: str
    system_text: str
    context_text: str
    output_contract: OutputContract = OutputContract.FREE_TEXT
    belief_schema_ref: str | None = None
    decode: DecodeParams = field(default_factory=DecodeParams)

    def __post_init__(self) -> None:
        if self.output_contract is OutputContract.STRUCTURED_DOCUMENT and not self.belief_schema_ref:
            raise ValueError("structured_document requests must name a belief_schema_ref")


class ModelBackend(Protocol):
    async def complete(self, request: ModelRequest, cancel: CancellationToken | None = None) -> str: ...

    def stream(
        self, request: ModelRequest, cancel: CancellationToken | None = None
    ) -> AsyncIterator[str]: ...


@dataclass(frozen=True)
class ScriptedRule:
    role: str
    pattern: str
    response: str
    latency_ms: float = 0.0
    regex: bool = False

    def __post_init__(self) -> None:
        if self.role not in ROLES and self.role != "any":
            raise ValueError(f"unknown rule role {self.role!r}")

    def matches(self, request: ModelRequest) -> bool:
        if self.role != "any" and self.role != request.role:
            return False
        if not self.pattern:
            return True
        if self.regex:
            return re.search(self.pattern, request.context_text) is not None
        return self.pattern in request.context_text

    @property
    def is_catch_all(self) -> bool:
        return self.role == "any" and not self.pattern


class ScriptedBackend:
    """Pure function of (ruleset, request) plus a deterministic delay."""

    def __init__(self, rules: Sequence[ScriptedRule], *, name: str = "scripted") -> None:
        if not rules:
            raise ScriptError("empty ruleset")
        if not rules[-1].is_catch_all:
            raise ScriptError("ruleset must end with an any-role catch-all rule")
        self.rules = tuple(rules)
        self.name = name
        self.calls: list[ModelRequest] = []

    def _match(self, request: ModelRequest) -> ScriptedRule:
        for rule in self.rules:
            if rule.matches(request):
                return rule
        raise ScriptError(f"no rule matched role={request.role}")  # unreachable with a catch-all

    async def complete(self, request: ModelRequest, cancel: CancellationToken | None = None) -> str:
        rule = self._match(request)
        self.calls.append(request)
        await cancellable_sleep(rule.latency_ms / 1000.0, cancel)
        return rule.response

    async def stream(
        self, request: ModelRequest, cancel: CancellationToken | None = None
    ) -> AsyncIterator[str]:
        rule = self._match(request)
        self.calls.append(request)
        await cancellable_sleep(rule.latency_ms / 1000.0, cancel)
        for chunk in _split_chunks(rule.response):
            if cancel is not None:
                cancel.raise_if_cancelled()
            yield chunk


def _split_chunks(text: str, size: int = 24) -> list[str]:
    """Deterministic word-boundary chunking for streamed responses."""
    if not text:
        return [""]
    words = text.split(" ")
    chunks: list[str] = []
    current = ""
    for i, word in enumerate(words):
        piece = word if i == 0 else " " + word
        if current and len(current) + len(piece) > size:
            chunks.append(current)
            current = piece
        else:
            current += piece
    if current:
        chunks.append(current)
    return chunks


def load_ruleset(path: Path | str) -> list[ScriptedRule]:
    """Load a scripted ruleset fixture, validating its format version."""
    import yaml

    raw = Path(path).read_text(encoding="utf-8")
    data = yaml.safe_load(raw) if str(path).endswith((".yaml", ".yml")) else json.loads(raw)
    return parse_ruleset(data)


def parse_ruleset(data: Mapping[str, Any]) -> list[ScriptedRule]:
    if not isinstance(data, Mapping):
        raise ScriptError("ruleset must be a mapping")
    version = data.get("format_version")
    if version != 1:
        raise ScriptError(f"unsupported ruleset format_version {version!r}")
    rules_raw = data.get("rules")
    if not isinstance(rules_raw, list) or not rules_raw:
        raise ScriptError("ruleset must define a non-empty rules list")
    rules = []
    for i, entry in enumerate(rules_raw):
        try:
            rules.append(
                ScriptedRule(
                    role=entry.get("role", "any"),
                    pattern=entry.get("pattern", ""),
                    response=entry["response"],
                    latency_ms=float(entry.get("latency_ms", 0.0)),
                    regex=bool(entry.get("regex", False)),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ScriptError(f"rule {i}: {exc}") from exc
    if not rules[-1].is_catch_all:
        raise ScriptError("ruleset must end with an any-role catch-all rule")
    return rules


class RemoteBackend:
    """Chat-completions style HTTP backend.

    The auth token comes from the environment (``api_key_env``), never from
    configuration files. One attempt per call; retry policy lives in the
    gateway.
    """

    def __init__(
        self,
        url: str,
        model: str,
        *,
        api_key_env: str = "MODEL_API_KEY",
        timeout_s: float = 30.0,
        transport: httpx.AsyncBaseTransport | None = None,
        name: str = "remote",
    ) -> None:
        self.url = url
        self.model = model
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s
        self.name = name
        self._client = httpx.AsyncClient(transport=transport, timeout=timeout_s)

    async def aclose(self) -> None:
        await self._client.aclose()

    def _payload(self, request: ModelRequest, stream: bool) -> dict[str, Any]:
        return {
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.context_text},
            ],
            "temperature": request.decode.temperature,
            "max_tokens": request.decode.max_tokens,
            "stream": stream,
        }

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    async def _post(self, request: ModelRequest) -> str:
        try:
            response = await self._client.post(
                self.url, json=self._payload(request, stream=False), headers=self._headers()
            )
        except httpx.TimeoutException as exc:
            raise GatewayTimeout(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise BackendUnavailable(str(exc)) from exc
        if response.status_code >= 500:
            raise BackendUnavailable(f"server error {response.status_code}")
        if response.status_code >= 400:
            raise GatewayError(f"request rejected: {response.status_code} {response.text}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise GatewayError(f"malformed completion payload: {exc}") from exc

    async def complete(self, request: ModelRequest, cancel: CancellationToken | None = None) -> str:
        if cancel is None:
            return await self._post(request)
        cancel.raise_if_cancelled()
        call = asyncio.ensure_future(self._post(request))
        waiter = asyncio.ensure_future(cancel.wait())
        done, _ = await asyncio.wait({call, waiter}, return_when=asyncio.FIRST_COMPLETED)
        if call in done:
            waiter.cancel()
            return call.result()
        call.cancel()
        raise OperationCancelled()

    async def stream(
        self, request: ModelRequest, cancel: CancellationToken | None = None
    ) -> AsyncIterator[str]:
        try:
            async with self._client.stream(
                "POST", self.url, json=self._payload(request, stream=True), headers=self._headers()
            ) as response:
                if response.status_code >= 500:
                    raise BackendUnavailable(f"server error {response.status_code}")
                if response.status_code >= 400:
                    raise GatewayError(f"request rejected: {response.status_code}")
                async for line in response.aiter_lines():
                    if cancel is not None:
                        cancel.raise_if_cancelled()
                    if not line.startswith("data:"):
                        continue
                    payload = line[5:].strip()
                    if payload == "[DONE]":
                        break
                    try:
                        delta = json.loads(payload)["choices"][0]["delta"].get("content", "")
                    except (KeyError, IndexError, ValueError):
                        continue
                    if delta:
                        yield delta
        except httpx.TimeoutException as exc:
            raise GatewayTimeout(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise BackendUnavailable(str(exc)) from exc


class ModelGateway:
    """Backend registry plus the retry policy shared by all callers.

    Retries apply only to BackendUnavailable: up to ``retries`` attempts
    after the first, exponential backoff. Contract violations are the
    caller's repair loop to handle, never retried here.
    """

    def __init__(self, *, retries: int = 2, backoff_s: float = 0.25) -> None:
        self.retries = retries
        self.backoff_s = backoff_s
        self._backends: dict[str, ModelBackend] = {}

    def register(self, ref: str, backend: ModelBackend) -> None:
        self._backends[ref] = backend

    def backend(self, ref: str) -> ModelBackend:
        try:
            return self._backends[ref]
        except KeyError:
            raise GatewayError(f"backend {ref!r} is not registered") from None

    async def complete(self, request: ModelRequest, cancel: CancellationToken | None = None) -> str:
        backend = self.backend(request.backend_ref)
        delay = self.backoff_s
        for attempt in range(self.retries + 1):
            try:
                return await backend.complete(request, cancel)
            except BackendUnavailable:
                if attempt == self.retries:
                    raise
                await cancellable_sleep(delay, cancel)
                delay *= 2
        raise AssertionError("unreachable")

    async def stream(
        self, request: ModelRequest, cancel: CancellationToken | None = None
    ) -> AsyncIterator[str]:
        backend = self.backend(request.backend_ref)
        async for chunk in backend.stream(request, cancel):
            yield chunk
