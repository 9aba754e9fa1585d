"""Scripted-user simulation and coordination metrics.

A scenario file names a scripted ruleset, a sequence of user turns, and
declarative assertions over the resulting per-turn records: gate
decisions, version deltas, latencies versus job wall time, staleness
windows, and text checks. Reports are deterministic under the scripted
backend except the wall-clock fields.

CLI:  python -m tandem.harness run <scenario.yaml> [--report out.json]
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .config import RuntimeConfig
from .gateway import load_ruleset
from .orchestrator import ReasonerJob, TurnResult
from .runtime import CoachRuntime, build_runtime
from .talker import render_plan
from .tools import ResourceCatalog, default_registry

WALL_CLOCK_FIELDS = ("latency_ms", "job_wall_ms", "staleness_ms")


class ScenarioParseError(Exception):
    pass


@dataclass(frozen=True)
class ScenarioTurn:
    text: str
    await_commit: bool = True


@dataclass(frozen=True)
class Scenario:
    name: str
    ruleset_path: Path
    catalog_path: Path | None
    config_overrides: Mapping[str, Any]
    turns: tuple[ScenarioTurn, ...]
    assertions: tuple[Mapping[str, Any], ...]


def load_scenario(path: Path | str) -> Scenario:
    import yaml

    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ScenarioParseError(f"{path}: {exc}") from exc
    if not isinstance(data, Mapping):
        raise ScenarioParseError(f"{path}: scenario must be a mapping")
    if data.get("format_version") != 1:
        raise ScenarioParseError(f"{path}: unsupported format_version {data.get('format_version')!r}")
    for key in ("name", "ruleset", "user_turns"):
        if key not in data:
            raise ScenarioParseError(f"{path}: missing {key!r}")

    ruleset_path = (path.parent / data["ruleset"]).resolve()
    if not ruleset_path.exists():
        raise ScenarioParseError(f"{path}: ruleset {ruleset_path} does not exist")

    if "catalog" in data:
        catalog_path = (path.parent / data["catalog"]).resolve()
    else:
        default = path.parent.parent / "catalog.json"
        catalog_path = default.resolve() if default.exists() else None

    turns = []
    for i, raw in enumerate(data["user_turns"]):
        if isinstance(raw, str):
            turns.append(ScenarioTurn(text=raw))
        elif isinstance(raw, Mapping) and "text" in raw:
            turns.append(ScenarioTurn(text=raw["text"], await_commit=bool(raw.get("await_commit", True))))
        else:
            raise ScenarioParseError(f"{path}: user_turns[{i}] must be text or a mapping with text")
    if not turns:
        raise ScenarioParseError(f"{path}: user_turns is empty")

    assertions = tuple(data.get("assertions", ()))
    for i, item in enumerate(assertions):
        if not isinstance(item, Mapping) or "check" not in item:
            raise ScenarioParseError(f"{path}: assertions[{i}] must be a mapping with a check")

    return Scenario(
        name=data["name"],
        ruleset_path=ruleset_path,
        catalog_path=catalog_path,
        config_overrides=data.get("config") or {},
        turns=tuple(turns),
        assertions=assertions,
    )


@dataclass
class TurnRecord:
    """Everything observed about one exchange, including the reasoning job
    it launched."""

    index: int  # 1-based
    user_text: str
    agent_text: str
    gate_decision: str
    talker_outcome: str
    degraded: bool
    version_at_start: int
    version_used: int | None
    latest_at_emission: int
    latency_ms: float
    job_id: str | None = None
    job_status: str | None = None
    job_wall_ms: float | None = None
    committed_version: int | None = None
    job_done_at_emission: bool | None = None
    staleness_ms: float | None = None
    committed_belief: dict[str, Any] | None = None
    plan_revision: int | None = None
    plan_titles: list[str] = field(default_factory=list)
    plan_rendering: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class ScenarioReport:
    scenario: str
    runtime_ms: float
    turns: list[TurnRecord]
    assertions: list[dict[str, Any]]
    passed: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "runtime_ms": self.runtime_ms,
            "turns": [t.to_dict() for t in self.turns],
            "assertions": list(self.assertions),
            "passed": self.passed,
        }

    def deterministic_view(self, mask_session: str | None = None) -> dict[str, Any]:
        """The report minus wall-clock fields; identical across runs.

        ``mask_session`` replaces that session id wherever it appears
        (job ids, plan ids, belief session fields) so reports from
        different sessions of the same scenario become comparable.
        """
        view = self.to_dict()
        view.pop("runtime_ms")
        for turn in view["turns"]:
            for name in WALL_CLOCK_FIELDS:
                turn.pop(name, None)
        if mask_session is not None:
            masked = json.dumps(view).replace(mask_session, "<session>")
            view = json.loads(masked)
        return view


def _runtime_for(scenario: Scenario) -> CoachRuntime:
    overrides = dict(scenario.config_overrides)
    config = RuntimeConfig().with_overrides(overrides)
    registry = None
    if scenario.catalog_path is not None:
        registry = default_registry(ResourceCatalog.load(scenario.catalog_path))
    rules = load_ruleset(scenario.ruleset_path)
    return build_runtime(config, rules=rules, registry=registry)


async def _drive(runtime: CoachRuntime, scenario: Scenario, session_id: str) -> list[TurnRecord]:
    records: list[TurnRecord] = []
    await runtime.create_session(session_id)
    for index, scripted in enumerate(scenario.turns, start=1):
        result: TurnResult = await runtime.turn(session_id, scripted.text)
        job: ReasonerJob | None = None
        job_done_at_emission: bool | None = None
        if result.plan.reasoner_job_id is not None:
            job = runtime.orchestrator.jobs[result.plan.reasoner_job_id]
            job_done_at_emission = job.done.is_set()
            if scripted.await_commit:
                await runtime.wait_for_job(job.job_id, timeout=30.0)

        record = TurnRecord(
            index=index,
            user_text=scripted.text,
            agent_text=result.turn.text,
            gate_decision=result.plan.gate_decision.value,
            talker_outcome=result.plan.talker_outcome.value,
            degraded=result.turn.degraded,
            version_at_start=result.version_at_start,
            version_used=result.turn.belief_version_used,
            latest_at_emission=result.latest_at_emission,
            latency_ms=result.turn.latency_ms or 0.0,
        )
        if job is not None:
            record.job_id = job.job_id
            record.job_done_at_emission = job_done_at_emission
            if job.done.is_set():
                assert job.trace is not None
                record.job_status = job.trace.status.value
                record.job_wall_ms = job.wall_ms
                record.committed_version = job.committed_version
                if job.trace.final_belief is not None:
                    record.committed_belief = job.trace.final_belief.to_dict()
                if job.wall_ms is not None and record.latency_ms is not None:
                    record.staleness_ms = max(0.0, job.wall_ms - record.latency_ms)
                if job.trace.final_plan is not None:
                    plan = job.trace.final_plan
                    record.plan_revision = plan.revision
                    record.plan_titles = [s.title for s in plan.steps]
                    record.plan_rendering = render_plan(plan)
        records.append(record)
    return records


def _turn_list(spec: Mapping[str, Any], count: int) -> list[int]:
    turns = spec.get("turns", "all")
    if turns == "all":
        return list(range(1, count + 1))
    if isinstance(turns, int):
        return [turns]
    return [int(t) for t in turns]


def _record(records: Sequence[TurnRecord], index: int) -> TurnRecord:
    if not 1 <= index <= len(records):
        raise ScenarioParseError(f"assertion names turn {index}, scenario has {len(records)}")
    return records[index - 1]


def evaluate_assertion(spec: Mapping[str, Any], records: Sequence[TurnRecord], runtime_ms: float) -> dict[str, Any]:
    check = spec["check"]
    failures: list[str] = []

    def expect(condition: bool, message: str) -> None:
        if not condition:
            failures.append(message)

    if check == "gate_decision":
        for i in _turn_list(spec, len(records)):
            r = _record(records, i)
            expect(r.gate_decision == spec["expect"], f"turn {i}: gate {r.gate_decision}")
    elif check == "talker_outcome":
        for i in _turn_list(spec, len(records)):
            r = _record(records, i)
            expect(r.talker_outcome == spec["expect"], f"turn {i}: outcome {r.talker_outcome}")
    elif check == "emitted_before_commit":
        for i in _turn_list(spec, len(records)):
            r = _record(records, i)
            expect(r.job_done_at_emission is False, f"turn {i}: job already done at emission")
    elif check == "version_lag_committed":
        for i in _turn_list(spec, len(records)):
            r = _record(records, i)
            if r.committed_version is None or r.version_used is None:
                failures.append(f"turn {i}: no committed version recorded")
                continue
            lag = r.committed_version - r.version_used
            expect(lag == spec["expect"], f"turn {i}: lag {lag}")
    elif check == "committed_version":
        for i in _turn_list(spec, len(records)):
            r = _record(records, i)
            expect(r.committed_version == spec["expect"], f"turn {i}: committed {r.committed_version}")
    elif check == "version_used_equals_start":
        for i in _turn_list(spec, len(records)):
            r = _record(records, i)
            expect(r.version_used == r.version_at_start, f"turn {i}: used {r.version_used} vs start {r.version_at_start}")
    elif check == "version_used_greater_than_start":
        for i in _turn_list(spec, len(records)):
            r = _record(records, i)
            expect(
                r.version_used is not None and r.version_used > r.version_at_start,
                f"turn {i}: used {r.version_used} vs start {r.version_at_start}",
            )
    elif check == "latency_below_job":
        for i in _turn_list(spec, len(records)):
            r = _record(records, i)
            expect(
                r.job_wall_ms is not None and r.latency_ms < r.job_wall_ms,
                f"turn {i}: latency {r.latency_ms} vs job {r.job_wall_ms}",
            )
    elif check == "text_contains":
        for i in _turn_list(spec, len(records)):
            r = _record(records, i)
            expect(spec["value"] in r.agent_text, f"turn {i}: text lacks {spec['value']!r}")
    elif check == "text_not_contains":
        for i in _turn_list(spec, len(records)):
            r = _record(records, i)
            expect(spec["value"] not in r.agent_text, f"turn {i}: text contains {spec['value']!r}")
    elif check == "text_equals_plan_rendering":
        for i in _turn_list(spec, len(records)):
            r = _record(records, i)
            expect(
                r.plan_rendering is not None and r.agent_text == r.plan_rendering,
                f"turn {i}: reply is not the plan rendering",
            )
    elif check == "plan_revision":
        for i in _turn_list(spec, len(records)):
            r = _record(records, i)
            expect(r.plan_revision == spec["expect"], f"turn {i}: revision {r.plan_revision}")
    elif check == "plan_titles_preserved":
        before = _record(records, int(spec["from_turn"]))
        after = _record(records, int(spec["to_turn"]))
        missing = [t for t in before.plan_titles if t not in after.plan_titles]
        expect(not missing, f"titles dropped: {missing}")
    elif check == "plan_step_present":
        for i in _turn_list(spec, len(records)):
            r = _record(records, i)
            expect(spec["title"] in r.plan_titles, f"turn {i}: step {spec['title']!r} absent")
    elif check == "belief_field":
        for i in _turn_list(spec, len(records)):
            r = _record(records, i)
            value = (r.committed_belief or {}).get(spec["field"])
            expect(value == spec["expect"], f"turn {i}: {spec['field']} = {value!r}")
    elif check == "belief_list":
        for i in _turn_list(spec, len(records)):
            r = _record(records, i)
            value = (r.committed_belief or {}).get(spec["field"])
            expect(value == list(spec["expect"]), f"turn {i}: {spec['field']} = {value!r}")
    elif check == "belief_list_length":
        for i in _turn_list(spec, len(records)):
            r = _record(records, i)
            value = (r.committed_belief or {}).get(spec["field"]) or []
            expect(len(value) == spec["expect"], f"turn {i}: {spec['field']} has {len(value)} entries")
    elif check == "runtime_under_ms":
        expect(runtime_ms < spec["value"], f"runtime {runtime_ms:.0f} ms")
    else:
        raise ScenarioParseError(f"unknown assertion check {check!r}")

    return {**{k: v for k, v in spec.items()}, "passed": not failures, "failures": failures}


async def run_scenario(path: Path | str, *, session_id: str = "scenario") -> ScenarioReport:
    scenario = load_scenario(path)
    runtime = _runtime_for(scenario)
    started = time.monotonic()
    try:
        records = await _drive(runtime, scenario, session_id)
    finally:
        await runtime.aclose()
    runtime_ms = (time.monotonic() - started) * 1000.0

    results = [evaluate_assertion(spec, records, runtime_ms) for spec in scenario.assertions]
    return ScenarioReport(
        scenario=scenario.name,
        runtime_ms=runtime_ms,
        turns=records,
        assertions=results,
        passed=all(r["passed"] for r in results),
    )


async def run_scenario_parallel(path: Path | str, copies: int = 3) -> list[ScenarioReport]:
    """Run the same scenario in several concurrent sessions of one runtime;
    cross-session isolation means every copy reports identically."""
    scenario = load_scenario(path)
    runtime = _runtime_for(scenario)
    started = time.monotonic()
    try:
        all_records = await asyncio.gather(
            *(_drive(runtime, scenario, f"scenario-{i}") for i in range(copies))
        )
    finally:
        await runtime.aclose()
    runtime_ms = (time.monotonic() - started) * 1000.0
    reports = []
    for records in all_records:
        results = [evaluate_assertion(spec, records, runtime_ms) for spec in scenario.assertions]
        reports.append(
            ScenarioReport(
                scenario=scenario.name,
                runtime_ms=runtime_ms,
                turns=records,
                assertions=results,
                passed=all(r["passed"] for r in results),
            )
        )
    return reports


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="harness", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario file")
    run.add_argument("scenario", type=Path)
    run.add_argument("--report", type=Path, default=None)
    run.add_argument("--parallel", type=int, default=0, metavar="N",
                     help="run N concurrent session copies instead of one")
    args = parser.parse_args(argv)

    if args.parallel:
        reports = asyncio.run(run_scenario_parallel(args.scenario, args.parallel))
        report = reports[0]
        views = [r.deterministic_view(mask_session=f"scenario-{i}") for i, r in enumerate(reports)]
        if any(v != views[0] for v in views[1:]):
            print("FAIL cross-session isolation: parallel reports diverge")
            return 1
    else:
        report = asyncio.run(run_scenario(args.scenario))

    for result in report.assertions:
        status = "PASS" if result["passed"] else "FAIL"
        detail = "" if result["passed"] else f"  {'; '.join(result['failures'])}"
        print(f"{status} {result['check']}{detail}")
    print(f"{'PASS' if report.passed else 'FAIL'} scenario {report.scenario} "
          f"({report.runtime_ms:.0f} ms, {len(report.turns)} turns)")

    if args.report is not None:
        args.report.write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
        print(f"report written to {args.report}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
