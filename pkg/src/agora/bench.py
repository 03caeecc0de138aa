"""Benchmark ingestion, pass@1 scoring, and full-run orchestration."""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .core import ProblemInstance
from .debate import DebateConfig, DebateState, export_transcript, run_debate
from .memory import MemoryBank
from .team import AgentTeam, TeamRunResult

logger = logging.getLogger(__name__)

WRITE_BACK_MODES = ("online", "offline", "disabled")


class SchemaError(Exception):
    pass


class DuplicateId(SchemaError):
    pass


@dataclass(frozen=True)
class Benchmark:
    name: str
    instances: tuple[ProblemInstance, ...]


@dataclass(frozen=True)
class EvaluationRule:
    relative_tolerance: float = 0.05
    absolute_tolerance: float = 1e-3


def evaluate_answer(
    predicted: float | None, ground_truth: float, rule: EvaluationRule = EvaluationRule()
) -> str:
    """Pass@1 verdict for one answer: ``correct``, ``incorrect``, or ``failed``.

    Relative tolerance on the ground truth, switching to an absolute
    tolerance when the ground truth is zero. Boundaries are inclusive.
    """
    if predicted is None:
        return "failed"
    if ground_truth == 0:
        return "correct" if abs(predicted) <= rule.absolute_tolerance else "incorrect"
    if abs(predicted - ground_truth) / abs(ground_truth) <= rule.relative_tolerance:
        return "correct"
    return "incorrect"


def load_benchmark(path: str | Path) -> Benchmark:
    """Parse the unified JSONL instance schema:
    ``{id, benchmark, description, ground_truth}`` per line."""
    path = Path(path)
    name = path.stem
    instances: list[ProblemInstance] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(data, dict):
                raise SchemaError(f"{path}:{lineno}: expected a JSON object")
            instance_id = data.get("id")
            description = data.get("description")
            if not isinstance(instance_id, str) or not instance_id:
                raise SchemaError(f"{path}:{lineno}: missing or invalid 'id'")
            if not isinstance(description, str) or not description.strip():
                raise SchemaError(f"{path}:{lineno}: missing or invalid 'description'")
            if instance_id in seen:
                raise DuplicateId(f"{path}:{lineno}: duplicate instance id {instance_id!r}")
            seen.add(instance_id)
            ground_truth = data.get("ground_truth")
            if ground_truth is not None and not isinstance(ground_truth, (int, float)):
                raise SchemaError(f"{path}:{lineno}: 'ground_truth' must be numeric or absent")
            instances.append(
                ProblemInstance(
                    id=instance_id,
                    description=description,
                    ground_truth=float(ground_truth) if ground_truth is not None else None,
                    benchmark=str(data.get("benchmark") or name),
                )
            )
    return Benchmark(name=name, instances=tuple(instances))


@dataclass(frozen=True)
class BenchmarkScore:
    correct: int
    total: int

    @property
    def accuracy(self) -> float:
        return 100.0 * self.correct / self.total if self.total else 0.0


@dataclass(frozen=True)
class InstanceResult:
    id: str
    benchmark: str
    final_objective: float | None
    ground_truth: float
    verdict: str  # correct | incorrect | failed
    debate_verdict: str | None
    rounds_used: int
    final_team: str | None


@dataclass(frozen=True)
class EvaluationReport:
    per_benchmark: dict[str, BenchmarkScore]
    macro_average: float
    per_instance: tuple[InstanceResult, ...]

    def to_json(self) -> str:
        payload = {
            "per_benchmark": {
                name: {"correct": s.correct, "total": s.total, "accuracy": s.accuracy}
                for name, s in self.per_benchmark.items()
            },
            "macro_average": self.macro_average,
            "per_instance": [
                {
                    "id": r.id,
                    "benchmark": r.benchmark,
                    "final_objective": r.final_objective,
                    "ground_truth": r.ground_truth,
                    "verdict": r.verdict,
                    "debate_verdict": r.debate_verdict,
                    "rounds_used": r.rounds_used,
                    "final_team": r.final_team,
                }
                for r in self.per_instance
            ],
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvaluationReport":
        payload = json.loads(text)
        per_benchmark = {
            name: BenchmarkScore(correct=int(s["correct"]), total=int(s["total"]))
            for name, s in payload["per_benchmark"].items()
        }
        per_instance = tuple(
            InstanceResult(
                id=r["id"],
                benchmark=r["benchmark"],
                final_objective=r["final_objective"],
                ground_truth=r["ground_truth"],
                verdict=r["verdict"],
                debate_verdict=r["debate_verdict"],
                rounds_used=r["rounds_used"],
                final_team=r["final_team"],
            )
            for r in payload["per_instance"]
        )
        return cls(
            per_benchmark=per_benchmark,
            macro_average=float(payload["macro_average"]),
            per_instance=per_instance,
        )


def build_report(results: Sequence[InstanceResult]) -> EvaluationReport:
    groups: dict[str, list[InstanceResult]] = {}
    for result in results:
        groups.setdefault(result.benchmark, []).append(result)
    per_benchmark = {
        name: BenchmarkScore(
            correct=sum(1 for r in rows if r.verdict == "correct"), total=len(rows)
        )
        for name, rows in groups.items()
    }
    accuracies = [score.accuracy for score in per_benchmark.values()]
    macro = sum(accuracies) / len(accuracies) if accuracies else 0.0
    return EvaluationReport(
        per_benchmark=per_benchmark, macro_average=macro, per_instance=tuple(results)
    )


@dataclass
class _InstanceOutcome:
    result: InstanceResult
    problem: ProblemInstance
    run_a: TeamRunResult | None = None
    run_b: TeamRunResult | None = None
    state: DebateState | None = None


def run_benchmark(
    benchmark: Benchmark,
    teams: tuple[AgentTeam, AgentTeam],
    debate_config: DebateConfig,
    memory: MemoryBank | Sequence[MemoryBank] | None = None,
    parallelism: int = 1,
    write_back: str = "online",
    rule: EvaluationRule = EvaluationRule(),
    reverify: bool = False,
    reverify_timeout: float = 90.0,
    transcript_dir: str | Path | None = None,
) -> EvaluationReport:
    """Solve every instance, score the debate's final answer, route memory
    write-backs per policy. Per-instance failures become ``failed`` verdicts,
    never aborts. Instance ordering in the report is input order regardless
    of completion order."""
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    if write_back not in WRITE_BACK_MODES:
        raise ValueError(f"write_back must be one of {WRITE_BACK_MODES}")
    banks = _as_banks(memory)
    if write_back == "disabled":
        banks = ()
    for instance in benchmark.instances:
        if instance.ground_truth is None:
            raise SchemaError(
                f"instance {instance.id!r} has no ground_truth; evaluation requires one"
            )
    if transcript_dir is not None:
        Path(transcript_dir).mkdir(parents=True, exist_ok=True)

    write_lock = threading.Lock()

    def solve(problem: ProblemInstance) -> _InstanceOutcome:
        try:
            with ThreadPoolExecutor(max_workers=2) as pool:
                future_a = pool.submit(teams[0].generate_candidate, problem)
                future_b = pool.submit(teams[1].generate_candidate, problem)
                run_a, run_b = future_a.result(), future_b.result()
            state = run_debate(
                problem,
                run_a.candidate,
                run_b.candidate,
                teams,
                debate_config,
                memory=banks[0] if banks else None,
                write_back=False,  # bench owns all write-back routing
            )
            if transcript_dir is not None:
                export_transcript(state, problem, Path(transcript_dir) / f"{problem.id}.json")
            final = state.final
            assert final is not None
            predicted = final.objective
            if reverify and final.code.strip():
                predicted, _ = teams[0].executor.run_code(final.code, timeout=reverify_timeout)
            result = InstanceResult(
                id=problem.id,
                benchmark=problem.benchmark,
                final_objective=predicted,
                ground_truth=problem.ground_truth,  # validated above
                verdict=evaluate_answer(predicted, problem.ground_truth, rule),
                debate_verdict=state.verdict,
                rounds_used=state.round,
                final_team=final.team_id,
            )
            return _InstanceOutcome(result=result, problem=problem, run_a=run_a, run_b=run_b, state=state)
        except Exception:
            logger.exception("instance %s failed", problem.id)
            result = InstanceResult(
                id=problem.id,
                benchmark=problem.benchmark,
                final_objective=None,
                ground_truth=problem.ground_truth,
                verdict="failed",
                debate_verdict=None,
                rounds_used=0,
                final_team=None,
            )
            return _InstanceOutcome(result=result, problem=problem)

    outcomes: list[_InstanceOutcome | None] = [None] * len(benchmark.instances)
    pending: list[_InstanceOutcome] = []

    def solve_and_route(index: int, problem: ProblemInstance) -> None:
        outcome = solve(problem)
        outcomes[index] = outcome
        if banks and outcome.state is not None:
            if write_back == "online":
                with write_lock:
                    _apply_writes(banks, outcome)
            else:  # offline: defer until the whole run completes
                with write_lock:
                    pending.append(outcome)

    if parallelism == 1:
        for index, problem in enumerate(benchmark.instances):
            solve_and_route(index, problem)
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            futures = [
                pool.submit(solve_and_route, index, problem)
                for index, problem in enumerate(benchmark.instances)
            ]
            for future in futures:
                future.result()

    if write_back == "offline" and banks:
        order = {problem.id: i for i, problem in enumerate(benchmark.instances)}
        for outcome in sorted(pending, key=lambda o: order[o.problem.id]):
            _apply_writes(banks, outcome)

    results = [outcome.result for outcome in outcomes if outcome is not None]
    return build_report(results)


def _as_banks(memory: MemoryBank | Sequence[MemoryBank] | None) -> tuple[MemoryBank, ...]:
    if memory is None:
        return ()
    if isinstance(memory, MemoryBank):
        return (memory,)
    return tuple(memory)


def _apply_writes(banks: tuple[MemoryBank, ...], outcome: _InstanceOutcome) -> None:
    state = outcome.state
    if state is None or state.final is None:
        return
    problem = outcome.problem
    for bank in banks:
        for run in (outcome.run_a, outcome.run_b):
            if run is None:
                continue
            for episode in run.debug_episodes:
                bank.write_debug(
                    episode.problem,
                    episode.formulation,
                    episode.failed_code,
                    episode.log,
                    episode.fixed_code,
                )
        if state.final.objective is not None:
            bank.write_solution(problem, state.final)
    if state.triggered and state.verdict == "consensus" and not state.debate_entry_written:
        primary = banks[0]
        if state.initial_discrepancy is None:
            state.initial_discrepancy = primary.describe_discrepancy(
                problem, state.history_a[0], state.history_b[0]
            )
        summary = primary.summarize_debate(
            problem,
            state.history_a[0],
            state.history_b[0],
            state.transcript,
            state.final.objective,
        )
        for bank in banks:
            bank.write_debate(problem, state.initial_discrepancy, state.transcript, summary)
        state.debate_entry_written = True
