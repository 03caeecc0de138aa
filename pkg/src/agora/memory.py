"""Read-write experience bank: solution, debug, and debate stores.

Three append-only stores share one retrieval operator: cosine top-N, which
reduces to a dot product because every key vector is unit-normalized on
ingest. Writes persist immediately (JSONL, one file per store) and every
retrieval or write lands in ``call_log`` so tests can observe traffic.
"""

from __future__ import annotations

import difflib
import json
import logging
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import prompts
from .core import CandidateSolution, ProblemInstance, objective_text
from .executor import ExecutionFeedback
from .gateway import ChatRequest, EmbeddingVector, Gateway, GatewayError, Message

logger = logging.getLogger(__name__)

STORE_NAMES = ("solution", "debug", "debate")

_STORE_FILES = {name: f"{name}.jsonl" for name in STORE_NAMES}


@dataclass(frozen=True)
class SolutionEntry:
    key_text: str
    key_vec: EmbeddingVector
    formulation: str
    code: str
    objective: float
    source_instance: str


@dataclass(frozen=True)
class DebugEntry:
    key_text: str  # error signature
    key_vec: EmbeddingVector
    log: str  # execution feedback excerpt
    diagnosis: str
    fix: str


@dataclass(frozen=True)
class DebateEntry:
    key_text: str  # problem text + discrepancy description
    key_vec: EmbeddingVector
    transcript: tuple[dict[str, Any], ...]
    summary: str
    mismatch_reason: str
    decisive_argument: str
    guardrails: tuple[str, ...]
    modeling_patterns: tuple[str, ...]


@dataclass(frozen=True)
class DebateSummary:
    """Parsed output of the debate summarizer (or its deterministic degrade)."""

    summary: str
    mismatch_reason: str
    decisive_argument: str
    guardrails: tuple[str, ...]
    modeling_patterns: tuple[str, ...]
    degraded: bool = False


_SUMMARY_KEYS = ("summary", "mismatch_reason", "decisive_argument", "guardrails", "modeling_patterns")


def extract_json_object(text: str) -> dict[str, Any] | None:
    """Parse a JSON object, tolerating prose around the outermost braces."""
    try:
        obj = json.loads(text)
        return obj if isinstance(obj, dict) else None
    except json.JSONDecodeError:
        pass
    start, end = text.find("{"), text.rfind("}")
    if start == -1 or end <= start:
        return None
    try:
        obj = json.loads(text[start : end + 1])
    except json.JSONDecodeError:
        return None
    return obj if isinstance(obj, dict) else None


def _truncate(text: str, budget: int) -> str:
    if len(text) <= budget:
        return text
    return text[: budget - 3] + "..."


def render_solution_entries(entries: Sequence[SolutionEntry], budget: int = 2000) -> str:
    blocks = []
    for i, e in enumerate(entries, 1):
        block = (
            f"[Retrieved case {i}] verified objective {e.objective}\n"
            f"Problem: {e.key_text}\n"
            f"Formulation:\n{e.formulation}\n"
            f"Code:\n{e.code}"
        )
        blocks.append(_truncate(block, budget))
    return "\n\n".join(blocks)


def render_debug_entries(entries: Sequence[DebugEntry], budget: int = 2000) -> str:
    blocks = []
    for i, e in enumerate(entries, 1):
        block = (
            f"[Past fix {i}] signature: {e.key_text}\n"
            f"Log: {e.log}\n"
            f"Diagnosis: {e.diagnosis}\n"
            f"Fix: {e.fix}"
        )
        blocks.append(_truncate(block, budget))
    return "\n\n".join(blocks)


def render_debate_entries(entries: Sequence[DebateEntry], budget: int = 2000) -> str:
    blocks = []
    for i, e in enumerate(entries, 1):
        guardrails = "; ".join(e.guardrails) or "(none)"
        patterns = "; ".join(e.modeling_patterns) or "(none)"
        block = (
            f"[Past debate {i}] {e.summary}\n"
            f"Mismatch reason: {e.mismatch_reason}\n"
            f"Decisive argument: {e.decisive_argument}\n"
            f"Guardrails: {guardrails}\n"
            f"Modeling patterns: {patterns}"
        )
        blocks.append(_truncate(block, budget))
    return "\n\n".join(blocks)


class MemoryBank:
    """Unified memory with cosine retrieval and durable append-only stores.

    Concurrency: many readers, single-writer appends per store. A write
    holds a store lock only for the in-memory append plus one file append;
    readers snapshot the entry list and never see a torn state.
    """

    def __init__(
        self,
        gateway: Gateway,
        dim: int,
        memory_dir: str | Path | None = None,
        summary_backend_id: str | None = None,
        signature_budget: int = 240,
    ):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self._gateway = gateway
        self.dim = dim
        self.memory_dir = Path(memory_dir) if memory_dir is not None else None
        self._summary_backend = summary_backend_id
        self.signature_budget = signature_budget
        self._stores: dict[str, list[Any]] = {name: [] for name in STORE_NAMES}
        self._locks = {name: threading.Lock() for name in STORE_NAMES}
        self.call_log: list[dict[str, Any]] = []
        self._log_lock = threading.Lock()
        self.corrupt_lines: dict[str, int] = {name: 0 for name in STORE_NAMES}
        if self.memory_dir is not None:
            self.memory_dir.mkdir(parents=True, exist_ok=True)
            self._load_all()

    # -- observability ------------------------------------------------

    def _log(self, event: dict[str, Any]) -> None:
        with self._log_lock:
            self.call_log.append(event)

    def counts(self) -> dict[str, int]:
        return {name: len(self._stores[name]) for name in STORE_NAMES}

    def entries(self, store: str) -> list[Any]:
        return list(self._stores[store])

    # -- retrieval ----------------------------------------------------

    def retrieve(self, query_text: str, store: str, n: int) -> list[Any]:
        """Top-``n`` entries by cosine similarity, ties broken older-first."""
        if store not in STORE_NAMES:
            raise ValueError(f"unknown store: {store}")
        if n < 1:
            raise ValueError("n must be >= 1")
        self._log({"op": "retrieve", "store": store, "n": n, "query": query_text[:120]})
        with self._locks[store]:
            snapshot = list(self._stores[store])
        if not snapshot:
            return []
        query = np.asarray(self._gateway.embed(query_text).values, dtype=np.float64)
        matrix = np.asarray([e.key_vec.values for e in snapshot], dtype=np.float64)
        sims = matrix @ query
        order = sorted(range(len(snapshot)), key=lambda i: (-sims[i], i))
        return [snapshot[i] for i in order[:n]]

    # -- writes -------------------------------------------------------

    def write_solution(self, problem: ProblemInstance, candidate: CandidateSolution) -> SolutionEntry:
        if candidate.objective is None:
            raise ValueError("only verified successes may enter the solution store")
        entry = SolutionEntry(
            key_text=problem.description,
            key_vec=self._embed_key(problem.description),
            formulation=candidate.formulation,
            code=candidate.code,
            objective=candidate.objective,
            source_instance=problem.id,
        )
        self._append("solution", entry)
        self._log({"op": "write_solution", "instance": problem.id})
        return entry

    def error_signature(
        self,
        problem: ProblemInstance,
        formulation: str,
        code: str,
        log: ExecutionFeedback,
    ) -> str:
        """Short retrieval key for a failure; LLM-written with a deterministic fallback."""
        if log.status == "solved":
            raise ValueError("error_signature requires a failed execution")
        text = self._summary_chat(
            "error_signature",
            char_budget=self.signature_budget,
            problem=problem.description,
            formulation=formulation,
            code=code,
            exec_status=log.status,
            stderr=_tail(log.stderr, 1500),
        )
        if text is not None and text.strip():
            return _truncate(" ".join(text.split()), self.signature_budget)
        return _truncate(_fallback_signature(log), self.signature_budget)

    def write_debug(
        self,
        problem: ProblemInstance,
        formulation: str,
        failed_code: str,
        log: ExecutionFeedback,
        fixed_code: str,
    ) -> DebugEntry:
        """Store a failed-then-fixed episode. Caller guarantees the episode's
        final run solved."""
        if log.status == "solved":
            raise ValueError("write_debug requires the failing run's feedback")
        diagnosis = fix = None
        raw = self._summary_chat(
            "debug_entry",
            problem=problem.description,
            formulation=formulation,
            failed_code=failed_code,
            stderr=_tail(log.stderr, 1500),
            fixed_code=fixed_code,
        )
        if raw is not None:
            parsed = extract_json_object(raw)
            if parsed and isinstance(parsed.get("diagnosis"), str) and isinstance(parsed.get("fix"), str):
                diagnosis, fix = parsed["diagnosis"], parsed["fix"]
        if diagnosis is None or fix is None:
            diagnosis = _tail(log.stderr, 500) or f"execution failed with status {log.status}"
            fix = "\n".join(
                difflib.unified_diff(
                    failed_code.splitlines(), fixed_code.splitlines(),
                    fromfile="failed", tofile="fixed", lineterm="",
                )
            )
        signature = self.error_signature(problem, formulation, failed_code, log)
        entry = DebugEntry(
            key_text=signature,
            key_vec=self._embed_key(signature),
            log=f"status={log.status}; stderr: {_tail(log.stderr, 500)}",
            diagnosis=diagnosis,
            fix=fix,
        )
        self._append("debug", entry)
        self._log({"op": "write_debug", "instance": problem.id, "signature": signature[:120]})
        return entry

    def describe_discrepancy(
        self,
        problem: ProblemInstance,
        cand_a: CandidateSolution,
        cand_b: CandidateSolution,
    ) -> str:
        """One-paragraph description of why two candidates disagree."""
        text = self._summary_chat(
            "discrepancy",
            problem=problem.description,
            objective_a=objective_text(cand_a.objective),
            formulation_a=_truncate(cand_a.formulation, 1500),
            objective_b=objective_text(cand_b.objective),
            formulation_b=_truncate(cand_b.formulation, 1500),
        )
        if text is not None and text.strip():
            return text.strip()
        a = "FAIL" if cand_a.objective is None else repr(cand_a.objective)
        b = "FAIL" if cand_b.objective is None else repr(cand_b.objective)
        return f"team A: {a}; team B: {b}; formulations differ in {_first_differing_line(cand_a.formulation, cand_b.formulation)}"

    def summarize_debate(
        self,
        problem: ProblemInstance,
        initial_a: CandidateSolution,
        initial_b: CandidateSolution,
        transcript: Sequence[dict[str, Any]],
        final_objective: float,
    ) -> DebateSummary:
        """Five-field summary of a converged debate; degrades instead of failing."""
        base_prompt = prompts.render(
            "debate_summarizer",
            description=problem.description,
            initial_A_result=objective_text(initial_a.objective),
            initial_B_result=objective_text(initial_b.objective),
            history_text=_history_text(transcript),
            final_result=repr(final_objective),
        )
        messages = [Message("user", base_prompt)]
        for attempt in range(2):
            raw = self._summary_chat_messages(messages)
            if raw is None:
                break  # summarizer unavailable; degrade straight away
            parsed = _parse_summary(raw)
            if parsed is not None:
                return parsed
            messages = messages + [
                Message("assistant", raw),
                Message("user", "Return ONLY the JSON object with the five required keys. No prose outside the JSON."),
            ]
        else:
            logger.warning("malformed debate summary after re-prompt; writing degraded entry")
            self._log({"op": "malformed_summary", "instance": problem.id})
        return DebateSummary(
            summary=_round_deltas(transcript),
            mismatch_reason="",
            decisive_argument="",
            guardrails=(),
            modeling_patterns=(),
            degraded=True,
        )

    def write_debate(
        self,
        problem: ProblemInstance,
        discrepancy: str,
        transcript: Sequence[dict[str, Any]],
        summary: DebateSummary,
    ) -> DebateEntry:
        """Store a resolved disagreement. Caller guarantees the debate was
        triggered and ended in consensus (not fallback)."""
        key_text = f"{problem.description}\n---DISAGREEMENT---\n{discrepancy}"
        entry = DebateEntry(
            key_text=key_text,
            key_vec=self._embed_key(key_text),
            transcript=tuple(dict(e) for e in transcript),
            summary=summary.summary,
            mismatch_reason=summary.mismatch_reason,
            decisive_argument=summary.decisive_argument,
            guardrails=tuple(summary.guardrails),
            modeling_patterns=tuple(summary.modeling_patterns),
        )
        self._append("debate", entry)
        self._log({"op": "write_debate", "instance": problem.id})
        return entry

    # -- persistence ----------------------------------------------------

    def _store_path(self, store: str) -> Path | None:
        if self.memory_dir is None:
            return None
        return self.memory_dir / _STORE_FILES[store]

    def _append(self, store: str, entry: Any) -> None:
        if entry.key_vec.dim != self.dim:
            raise ValueError(f"entry dim {entry.key_vec.dim} != store dim {self.dim}")
        with self._locks[store]:
            self._stores[store].append(entry)
            path = self._store_path(store)
            if path is not None:
                new_file = not path.exists()
                with open(path, "a", encoding="utf-8") as fh:
                    if new_file:
                        fh.write(json.dumps({"schema": 1, "dim": self.dim}) + "\n")
                    fh.write(json.dumps(_entry_to_dict(entry), ensure_ascii=True) + "\n")

    def _load_all(self) -> None:
        for store in STORE_NAMES:
            path = self._store_path(store)
            if path is None or not path.exists():
                continue
            loaded, corrupt = _load_store_file(path, store, self.dim)
            self._stores[store].extend(loaded)
            self.corrupt_lines[store] += corrupt

    # -- helpers --------------------------------------------------------

    def _embed_key(self, text: str) -> EmbeddingVector:
        vec = self._gateway.embed(text)
        if vec.dim != self.dim:
            raise ValueError(f"embedding dim {vec.dim} != store dim {self.dim}")
        return vec

    def _summary_chat(self, template_name: str, **values: object) -> str | None:
        return self._summary_chat_messages([Message("user", prompts.render(template_name, **values))])

    def _summary_chat_messages(self, messages: Sequence[Message]) -> str | None:
        if self._summary_backend is None:
            return None
        request = ChatRequest(backend_id=self._summary_backend, messages=tuple(messages))
        try:
            return self._gateway.complete(request).text
        except GatewayError as exc:
            logger.warning("memory summarizer call failed: %s", exc)
            return None


def _tail(text: str, chars: int) -> str:
    return text[-chars:] if len(text) > chars else text


def _fallback_signature(log: ExecutionFeedback) -> str:
    lines = [line.strip() for line in log.stderr.splitlines() if line.strip()]
    if not lines:
        return f"{log.status}: no stderr"
    first = lines[0]
    head = lines[-1].split(":", 1)[0].strip()
    if head and head != first and (head.endswith("Error") or head.endswith("Exception") or head.endswith("Warning")):
        return f"{first} | {head}"
    return first


def _first_differing_line(a: str, b: str) -> str:
    for la, lb in zip(a.splitlines(), b.splitlines()):
        if la != lb:
            return f"{la!r} vs {lb!r}"
    lines_a, lines_b = a.splitlines(), b.splitlines()
    if len(lines_a) != len(lines_b):
        longer = lines_a if len(lines_a) > len(lines_b) else lines_b
        return repr(longer[min(len(lines_a), len(lines_b))])
    return "(no differing line)"


def _history_text(transcript: Sequence[dict[str, Any]]) -> str:
    lines = []
    for event in transcript:
        obj = objective_text(event.get("objective"))
        lines.append(
            f"round {event.get('round')} team {event.get('team')}: objective={obj}; "
            f"formulation: {_truncate(str(event.get('formulation', '')), 300)}"
        )
    return "\n".join(lines) or "(no rounds recorded)"


def _round_deltas(transcript: Sequence[dict[str, Any]]) -> str:
    by_round: dict[int, dict[str, str]] = {}
    for event in transcript:
        rnd = int(event.get("round", 0))
        by_round.setdefault(rnd, {})[str(event.get("team"))] = objective_text(event.get("objective"))
    parts = []
    for rnd in sorted(by_round):
        teams = "; ".join(f"{team}={obj}" for team, obj in sorted(by_round[rnd].items()))
        parts.append(f"round {rnd}: {teams}")
    return " | ".join(parts) or "(no rounds recorded)"


def _parse_summary(raw: str) -> DebateSummary | None:
    parsed = extract_json_object(raw)
    if parsed is None:
        return None
    for key in _SUMMARY_KEYS:
        if key not in parsed:
            return None
    if not isinstance(parsed["guardrails"], list) or not isinstance(parsed["modeling_patterns"], list):
        return None
    return DebateSummary(
        summary=str(parsed["summary"]),
        mismatch_reason=str(parsed["mismatch_reason"]),
        decisive_argument=str(parsed["decisive_argument"]),
        guardrails=tuple(str(g) for g in parsed["guardrails"]),
        modeling_patterns=tuple(str(p) for p in parsed["modeling_patterns"]),
        degraded=False,
    )


def _entry_to_dict(entry: Any) -> dict[str, Any]:
    if isinstance(entry, SolutionEntry):
        return {
            "key_text": entry.key_text,
            "key_vec": list(entry.key_vec.values),
            "formulation": entry.formulation,
            "code": entry.code,
            "objective": entry.objective,
            "source_instance": entry.source_instance,
        }
    if isinstance(entry, DebugEntry):
        return {
            "key_text": entry.key_text,
            "key_vec": list(entry.key_vec.values),
            "log": entry.log,
            "diagnosis": entry.diagnosis,
            "fix": entry.fix,
        }
    if isinstance(entry, DebateEntry):
        return {
            "key_text": entry.key_text,
            "key_vec": list(entry.key_vec.values),
            "transcript": list(entry.transcript),
            "summary": entry.summary,
            "mismatch_reason": entry.mismatch_reason,
            "decisive_argument": entry.decisive_argument,
            "guardrails": list(entry.guardrails),
            "modeling_patterns": list(entry.modeling_patterns),
        }
    raise TypeError(f"unknown entry type: {type(entry)!r}")


def _entry_from_dict(store: str, data: dict[str, Any]) -> Any:
    vec = EmbeddingVector(values=tuple(float(v) for v in data["key_vec"]), dim=len(data["key_vec"]))
    if store == "solution":
        return SolutionEntry(
            key_text=data["key_text"],
            key_vec=vec,
            formulation=data["formulation"],
            code=data["code"],
            objective=float(data["objective"]),
            source_instance=data["source_instance"],
        )
    if store == "debug":
        return DebugEntry(
            key_text=data["key_text"],
            key_vec=vec,
            log=data["log"],
            diagnosis=data["diagnosis"],
            fix=data["fix"],
        )
    return DebateEntry(
        key_text=data["key_text"],
        key_vec=vec,
        transcript=tuple(dict(e) for e in data["transcript"]),
        summary=data["summary"],
        mismatch_reason=data["mismatch_reason"],
        decisive_argument=data["decisive_argument"],
        guardrails=tuple(str(g) for g in data["guardrails"]),
        modeling_patterns=tuple(str(p) for p in data["modeling_patterns"]),
    )


def _load_store_file(path: Path, store: str, dim: int) -> tuple[list[Any], int]:
    entries: list[Any] = []
    corrupt = 0
    with open(path, encoding="utf-8") as fh:
        header_line = fh.readline().strip()
        if not header_line:
            return entries, corrupt
        try:
            header = json.loads(header_line)
            if header.get("schema") != 1:
                raise ValueError(f"{path}: unsupported schema {header.get('schema')!r}")
            if int(header.get("dim", -1)) != dim:
                raise ValueError(f"{path}: store dim {header.get('dim')} != configured dim {dim}")
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: corrupt store header") from exc
        for lineno, line in enumerate(fh, 2):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
                entry = _entry_from_dict(store, data)
                if entry.key_vec.dim != dim:
                    raise ValueError("wrong vector dimension")
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                corrupt += 1
                logger.warning("%s:%d: skipping corrupt entry: %s", path, lineno, exc)
                continue
            entries.append(entry)
    return entries, corrupt
