"""Shared memory between the two agents.

Holds, per session: a versioned belief slot, a plan slot, and the
append-only turn history. Reads are wait-free snapshots; writes serialize
behind a per-session lock. When bound to a directory the store rewrites
the session's files (plus a checksummed manifest) on every mutation, so a
process restart followed by ``load_session`` recovers committed state.

On-disk layout, one directory per session:

    sessions/<session_id>/
        belief.json    latest committed belief
        beliefs.log    every committed version, one JSON document per line
        turns.log      one turn per line
        plan.json      current plan (absent until one exists)
        manifest.json  schema_version + SHA-256 checksum per file
"""

from __future__ import annotations

import asyncio
import os
import time
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

from .core import (
    SCHEMA_VERSION,
    BeliefState,
    Plan,
    Role,
    Turn,
    bootstrap_belief,
    canonical_json,
    sha256_hex,
)


class MemoryError_(Exception):
    """Base class for memory-store failures."""


class SessionNotFound(MemoryError_):
    pass


class SessionExists(MemoryError_):
    pass


class StorageFailure(MemoryError_):
    """A persistence write failed; the triggering mutation was rolled back."""


class CorruptManifest(MemoryError_):
    """Checksum or structure mismatch while loading a persisted session."""


class VersionSkew(MemoryError_):
    """Persisted schema_version is newer than this runtime understands."""


@dataclass(frozen=True)
class MemorySnapshot:
    """Immutable view of a session at one instant.

    ``belief.version`` equals the highest committed version at snapshot
    time; an in-flight reasoning job is never visible here.
    """

    belief: BeliefState
    plan: Plan | None
    history_window: tuple[Turn, ...]
    snapshot_at: float


@dataclass(frozen=True)
class SessionState:
    session_id: str
    belief: BeliefState
    beliefs: tuple[BeliefState, ...]
    plan: Plan | None
    history: tuple[Turn, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "belief": self.belief.to_dict(),
            "beliefs": [b.to_dict() for b in self.beliefs],
            "plan": self.plan.to_dict() if self.plan else None,
            "history": [t.to_dict() for t in self.history],
        }


@dataclass(frozen=True)
class Manifest:
    schema_version: int
    session_id: str
    belief_version: int
    turn_count: int
    checksums: dict[str, str]

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "session_id": self.session_id,
            "belief_version": self.belief_version,
            "turn_count": self.turn_count,
            "checksums": dict(self.checksums),
        }


@dataclass
class _SessionRecord:
    session_id: str
    beliefs: list[BeliefState]
    turns: list[Turn] = field(default_factory=list)
    plan: Plan | None = None
    lock: asyncio.Lock = field(default_factory=asyncio.Lock)

    @property
    def belief(self) -> BeliefState:
        return self.beliefs[-1]


class MemoryStore:
    """Versioned, optionally directory-backed session memory.

    Single writer per slot (enforced upstream by the one-job rule), any
    number of concurrent readers. With ``root=None`` the store is purely
    in-memory and persist/load raise StorageFailure.
    """

    def __init__(
        self,
        root: Path | str | None = None,
        *,
        journey_title: str = "Sleeping Coaching",
        history_window: int = 20,
        clock: Callable[[], float] = time.time,
    ) -> None:
        self.root = Path(root) if root is not None else None
        self.journey_title = journey_title
        self.history_window = history_window
        self._clock = clock
        self._sessions: dict[str, _SessionRecord] = {}

    # ── session lifecycle ────────────────────────────────────────────

    async def create_session(self, session_id: str | None = None) -> SessionState:
        sid = session_id or f"s-{uuid.uuid4().hex[:12]}"
        if sid in self._sessions:
            raise SessionExists(sid)
        record = _SessionRecord(session_id=sid, beliefs=[bootstrap_belief(sid, self.journey_title)])
        self._sessions[sid] = record
        if self.root is not None:
            try:
                self._write_session(record)
            except OSError as exc:
                del self._sessions[sid]
                raise StorageFailure(str(exc)) from exc
        return self._state_of(record)

    def has_session(self, session_id: str) -> bool:
        return session_id in self._sessions

    def session_ids(self) -> tuple[str, ...]:
        return tuple(self._sessions)

    def _record(self, session_id: str) -> _SessionRecord:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise SessionNotFound(session_id) from None

    def _state_of(self, record: _SessionRecord) -> SessionState:
        return SessionState(
            session_id=record.session_id,
            belief=record.belief,
            beliefs=tuple(record.beliefs),
            plan=record.plan,
            history=tuple(record.turns),
        )

    async def get_state(self, session_id: str) -> SessionState:
        return self._state_of(self._record(session_id))

    # ── the belief slot ──────────────────────────────────────────────

    async def commit_belief(self, session_id: str, belief: BeliefState) -> int:
        """Assign the next version and commit atomically.

        The caller must leave ``belief.version`` unset; readers never see
        a partially applied commit.
        """
        record = self._record(session_id)
        if belief.version is not None:
            raise ValueError("belief.version is assigned by the store; pass it unset")
        async with record.lock:
            version = record.belief.version
            assert version is not None
            committed = belief.with_version(version + 1)
            if belief.session_id != session_id:
                committed = replace(committed, session_id=session_id)
            record.beliefs.append(committed)
            try:
                self._flush(record)
            except OSError as exc:
                record.beliefs.pop()
                raise StorageFailure(str(exc)) from exc
            return version + 1

    async def latest_version(self, session_id: str) -> int:
        version = self._record(session_id).belief.version
        assert version is not None
        return version

    async def belief_log(self, session_id: str) -> tuple[BeliefState, ...]:
        return tuple(self._record(session_id).beliefs)

    # ── history ──────────────────────────────────────────────────────

    async def append_turn(self, session_id: str, turn: Turn) -> int:
        """Append with the next contiguous turn_id; durable before returning."""
        record = self._record(session_id)
        if turn.role is Role.USER and not turn.text:
            raise ValueError("user turns must carry non-empty text")
        if turn.role is Role.AGENT and turn.belief_version_used is None:
            raise ValueError("agent turns must record belief_version_used")
        async with record.lock:
            turn_id = len(record.turns)
            record.turns.append(replace(turn, turn_id=turn_id))
            try:
                self._flush(record)
            except OSError as exc:
                record.turns.pop()
                raise StorageFailure(str(exc)) from exc
            return turn_id

    async def history(self, session_id: str) -> tuple[Turn, ...]:
        return tuple(self._record(session_id).turns)

    # ── plan slot ────────────────────────────────────────────────────

    async def store_plan(self, session_id: str, plan: Plan) -> None:
        record = self._record(session_id)
        async with record.lock:
            previous = record.plan
            record.plan = plan
            try:
                self._flush(record)
            except OSError as exc:
                record.plan = previous
                raise StorageFailure(str(exc)) from exc

    async def get_plan(self, session_id: str) -> Plan | None:
        return self._record(session_id).plan

    # ── snapshot reads ───────────────────────────────────────────────

    async def read_snapshot(self, session_id: str, window: int | None = None) -> MemorySnapshot:
        """Latest committed belief, plan, and last-K turns; never blocks on
        an in-flight reasoning job."""
        record = self._record(session_id)
        k = self.history_window if window is None else window
        turns = tuple(record.turns[-k:]) if k > 0 else ()
        return MemorySnapshot(
            belief=record.belief,
            plan=record.plan,
            history_window=turns,
            snapshot_at=self._clock(),
        )

    # ── persistence ──────────────────────────────────────────────────

    def _session_dir(self, session_id: str) -> Path:
        assert self.root is not None
        return self.root / "sessions" / session_id

    @staticmethod
    def _file_contents(record: _SessionRecord) -> dict[str, str]:
        files = {
            "belief.json": canonical_json(record.belief.to_dict()) + "\n",
            "beliefs.log": "".join(canonical_json(b.to_dict()) + "\n" for b in record.beliefs),
            "turns.log": "".join(canonical_json(t.to_dict()) + "\n" for t in record.turns),
        }
        if record.plan is not None:
            files["plan.json"] = canonical_json(record.plan.to_dict()) + "\n"
        return files

    def _manifest_for(self, record: _SessionRecord, files: dict[str, str]) -> Manifest:
        version = record.belief.version
        assert version is not None
        return Manifest(
            schema_version=SCHEMA_VERSION,
            session_id=record.session_id,
            belief_version=version,
            turn_count=len(record.turns),
            checksums={name: sha256_hex(text) for name, text in files.items()},
        )

    def _write_session(self, record: _SessionRecord) -> None:
        directory = self._session_dir(record.session_id)
        directory.mkdir(parents=True, exist_ok=True)
        files = self._file_contents(record)
        manifest = self._manifest_for(record, files)
        files["manifest.json"] = canonical_json(manifest.to_dict()) + "\n"
        for name, text in files.items():
            tmp = directory / (name + ".tmp")
            tmp.write_text(text, encoding="utf-8")
            os.replace(tmp, directory / name)
        stale_plan = directory / "plan.json"
        if record.plan is None and stale_plan.exists():
            stale_plan.unlink()

    def _flush(self, record: _SessionRecord) -> None:
        if self.root is not None:
            self._write_session(record)

    async def persist_session(self, session_id: str) -> Manifest:
        """Write the session to disk and return its manifest."""
        record = self._record(session_id)
        if self.root is None:
            raise StorageFailure("store has no backing directory")
        async with record.lock:
            try:
                self._write_session(record)
            except OSError as exc:
                raise StorageFailure(str(exc)) from exc
            return self._manifest_for(record, self._file_contents(record))

    async def load_session(self, session_id: str) -> SessionState:
        """Load a persisted session into this store, verifying checksums."""
        if self.root is None:
            raise StorageFailure("store has no backing directory")
        directory = self._session_dir(session_id)
        manifest_path = directory / "manifest.json"
        if not manifest_path.exists():
            raise SessionNotFound(session_id)
        import json

        try:
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CorruptManifest(f"unreadable manifest: {exc}") from exc
        schema = manifest.get("schema_version")
        if not isinstance(schema, int):
            raise CorruptManifest("manifest missing schema_version")
        if schema > SCHEMA_VERSION:
            raise VersionSkew(f"file schema {schema} newer than runtime {SCHEMA_VERSION}")
        checksums = manifest.get("checksums")
        if not isinstance(checksums, dict):
            raise CorruptManifest("manifest missing checksums")

        contents: dict[str, str] = {}
        for name, expected in checksums.items():
            path = directory / name
            try:
                text = path.read_text(encoding="utf-8")
            except OSError as exc:
                raise CorruptManifest(f"{name}: unreadable: {exc}") from exc
            if sha256_hex(text) != expected:
                raise CorruptManifest(f"{name}: checksum mismatch")
            contents[name] = text

        try:
            beliefs = [
                BeliefState.from_dict(json.loads(line))
                for line in contents["beliefs.log"].splitlines()
                if line
            ]
            turns = [
                Turn.from_dict(json.loads(line))
                for line in contents["turns.log"].splitlines()
                if line
            ]
            plan = (
                Plan.from_dict(json.loads(contents["plan.json"]))
                if "plan.json" in contents
                else None
            )
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise CorruptManifest(f"undecodable session files: {exc}") from exc
        if not beliefs:
            raise CorruptManifest("beliefs.log holds no versions")

        record = _SessionRecord(session_id=session_id, beliefs=beliefs, turns=turns, plan=plan)
        self._sessions[session_id] = record
        return self._state_of(record)

    def persisted_session_ids(self) -> tuple[str, ...]:
        if self.root is None:
            return ()
        base = self.root / "sessions"
        if not base.exists():
            return ()
        return tuple(sorted(p.name for p in base.iterdir() if (p / "manifest.json").exists()))
