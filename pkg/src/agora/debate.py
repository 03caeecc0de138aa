"""Decentralized debate between two agent teams.

A debate starts only on substantive disagreement (either candidate failed,
or the objectives differ by more than the tolerance), runs bounded rounds of
peer cross-review with re-execution, and terminates on consensus or, when
the round budget is exhausted, by stability-based selection.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .core import CandidateSolution, ProblemInstance
from .memory import DebateEntry, MemoryBank
from .team import AgentTeam

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DebateConfig:
    tolerance: float = 0.05
    max_rounds: int = 3
    memory_enabled: bool = True

    def __post_init__(self) -> None:
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")


@dataclass
class DebateState:
    history_a: list[CandidateSolution]
    history_b: list[CandidateSolution]
    round: int = 0
    verdict: str | None = None  # no_debate_needed | consensus | fallback
    final: CandidateSolution | None = None
    transcript: list[dict[str, Any]] = field(default_factory=list)
    triggered: bool = False
    initial_discrepancy: str | None = None
    debate_entry_written: bool = False


def should_trigger(v_a: float | None, v_b: float | None, tolerance: float) -> bool:
    """Disagreement test: a failure on either side, or an objective gap
    larger than the tolerance (absolute difference on raw values)."""
    if v_a is None or v_b is None:
        return True
    return abs(v_a - v_b) > tolerance


_MIN_WORDS = re.compile(r"\b(?:minimi[sz]e|minimi[sz]ing|minimi[sz]ation|min)\b", re.IGNORECASE)
_MAX_WORDS = re.compile(r"\b(?:maximi[sz]e|maximi[sz]ing|maximi[sz]ation|max)\b", re.IGNORECASE)


def infer_sense(formulation: str) -> str | None:
    """Optimization sense declared in a formulation, or ``None`` when the
    declaration is absent or conflicting."""
    has_min = bool(_MIN_WORDS.search(formulation))
    has_max = bool(_MAX_WORDS.search(formulation))
    if has_min and not has_max:
        return "min"
    if has_max and not has_min:
        return "max"
    return None


def pick_consensus(cand_a: CandidateSolution, cand_b: CandidateSolution) -> CandidateSolution:
    """Choose the better-performing of two agreeing candidates.

    Cascade: shared declared sense decides (lower for min, higher for max);
    otherwise fewer debug attempts; otherwise team A.
    """
    if cand_a.objective is None or cand_b.objective is None:
        raise ValueError("pick_consensus requires two successful candidates")
    sense_a = infer_sense(cand_a.formulation)
    sense_b = infer_sense(cand_b.formulation)
    if sense_a is not None and sense_a == sense_b:
        if sense_a == "min":
            return cand_a if cand_a.objective <= cand_b.objective else cand_b
        return cand_a if cand_a.objective >= cand_b.objective else cand_b
    if cand_a.debug_attempts != cand_b.debug_attempts:
        return cand_a if cand_a.debug_attempts < cand_b.debug_attempts else cand_b
    return cand_a


def levenshtein(a: str, b: str) -> int:
    if a == b:
        return 0
    # Trim the common prefix and suffix before the DP; candidate texts
    # between rounds usually share most of their content.
    start = 0
    while start < len(a) and start < len(b) and a[start] == b[start]:
        start += 1
    a, b = a[start:], b[start:]
    end = 0
    while end < len(a) and end < len(b) and a[len(a) - 1 - end] == b[len(b) - 1 - end]:
        end += 1
    if end:
        a, b = a[: len(a) - end], b[: len(b) - end]
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(b) > len(a):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, char_a in enumerate(a, 1):
        current = [i]
        for j, char_b in enumerate(b, 1):
            current.append(
                min(previous[j] + 1, current[-1] + 1, previous[j - 1] + (char_a != char_b))
            )
        previous = current
    return previous[-1]


def normalized_change(previous: CandidateSolution, current: CandidateSolution) -> float:
    """Edit distance between two candidates over formulation+code, scaled to [0, 1]."""
    text_prev = previous.formulation + "\n" + previous.code
    text_cur = current.formulation + "\n" + current.code
    longest = max(len(text_prev), len(text_cur))
    if longest == 0:
        return 0.0
    return levenshtein(text_prev, text_cur) / longest


def stability_fallback(
    history_a: list[CandidateSolution], history_b: list[CandidateSolution]
) -> CandidateSolution:
    """Pick the last candidate of the team that changed least between the
    final two rounds. Exact tie goes to team A."""
    if len(history_a) < 2 or len(history_b) < 2:
        raise ValueError("stability fallback needs at least one completed round")
    change_a = normalized_change(history_a[-2], history_a[-1])
    change_b = normalized_change(history_b[-2], history_b[-1])
    return history_a[-1] if change_a <= change_b else history_b[-1]


def run_round(
    problem: ProblemInstance,
    state: DebateState,
    teams: tuple[AgentTeam, AgentTeam],
    config: DebateConfig,
    memory: MemoryBank | None = None,
) -> DebateState:
    """One round of peer cross-review: both teams revise, both re-execute."""
    if state.verdict is not None:
        raise ValueError("debate already terminated")
    if state.round >= config.max_rounds:
        raise ValueError("round budget exhausted")
    team_a, team_b = teams
    last_a, last_b = state.history_a[-1], state.history_b[-1]

    context_a = context_b = ""
    if config.memory_enabled and memory is not None:
        discrepancy = memory.describe_discrepancy(problem, last_a, last_b)
        if state.initial_discrepancy is None:
            state.initial_discrepancy = discrepancy
        context_a = team_a.debate_context(problem, discrepancy)
        context_b = team_b.debate_context(problem, discrepancy)

    def revise_one(
        team: AgentTeam, mine: CandidateSolution, other: CandidateSolution, context: str
    ) -> tuple[CandidateSolution, bool]:
        revised = team.revise(problem, mine, other, context)
        if revised is None:
            # Malformed completion even after the re-prompt: this team's
            # candidate carries forward unchanged so the round cannot deadlock.
            return mine, True
        formulation, code = revised
        # Re-execute even textually identical code so the recorded objective
        # always reflects the code of this round.
        objective, feedback = team.executor.run_code(code, timeout=team.config.exec_timeout)
        candidate = CandidateSolution(
            formulation=formulation,
            code=code,
            objective=objective,
            feedback=feedback,
            team_id=team.team_id,
            debug_attempts=0,
        )
        return candidate, False

    with ThreadPoolExecutor(max_workers=2) as pool:
        future_a = pool.submit(revise_one, team_a, last_a, last_b, context_a)
        future_b = pool.submit(revise_one, team_b, last_b, last_a, context_b)
        new_a, carried_a = future_a.result()
        new_b, carried_b = future_b.result()

    state.round += 1
    state.history_a.append(new_a)
    state.history_b.append(new_b)
    for new, last, carried in ((new_a, last_a, carried_a), (new_b, last_b, carried_b)):
        state.transcript.append(
            {
                "round": state.round,
                "team": new.team_id,
                "formulation": new.formulation,
                "code": new.code,
                "objective": new.objective,
                "change": normalized_change(last, new),
                "carried": carried,
            }
        )
    return state


def run_debate(
    problem: ProblemInstance,
    cand_a: CandidateSolution,
    cand_b: CandidateSolution,
    teams: tuple[AgentTeam, AgentTeam],
    config: DebateConfig,
    memory: MemoryBank | None = None,
    write_back: bool = True,
) -> DebateState:
    """Full protocol: trigger gate, bounded refinement, consensus or fallback."""
    state = DebateState(history_a=[cand_a], history_b=[cand_b])
    state.triggered = should_trigger(cand_a.objective, cand_b.objective, config.tolerance)
    if not state.triggered:
        state.verdict = "no_debate_needed"
        state.final = pick_consensus(cand_a, cand_b)
        return state

    while state.round < config.max_rounds:
        run_round(problem, state, teams, config, memory)
        last_a, last_b = state.history_a[-1], state.history_b[-1]
        if not should_trigger(last_a.objective, last_b.objective, config.tolerance):
            state.verdict = "consensus"
            state.final = pick_consensus(last_a, last_b)
            if memory is not None and write_back:
                emit_debate_write(memory, problem, state)
            return state
    state.verdict = "fallback"
    state.final = stability_fallback(state.history_a, state.history_b)
    return state


def emit_debate_write(
    memory: MemoryBank, problem: ProblemInstance, state: DebateState
) -> DebateEntry | None:
    """Write the debate to memory iff it was triggered and ended in consensus."""
    if not state.triggered or state.verdict != "consensus" or state.final is None:
        return None
    if state.debate_entry_written:
        return None
    if state.initial_discrepancy is None:
        state.initial_discrepancy = memory.describe_discrepancy(
            problem, state.history_a[0], state.history_b[0]
        )
    summary = memory.summarize_debate(
        problem,
        state.history_a[0],
        state.history_b[0],
        state.transcript,
        state.final.objective,
    )
    entry = memory.write_debate(problem, state.initial_discrepancy, state.transcript, summary)
    state.debate_entry_written = True
    return entry


def export_transcript(state: DebateState, problem: ProblemInstance, path: str | Path) -> None:
    """Dump one instance's debate as JSON for offline analysis."""
    payload = {
        "instance": problem.id,
        "triggered": state.triggered,
        "verdict": state.verdict,
        "rounds": state.round,
        "initial": {
            "a": state.history_a[0].objective,
            "b": state.history_b[0].objective,
        },
        "final_objective": state.final.objective if state.final is not None else None,
        "final_team": state.final.team_id if state.final is not None else None,
        "transcript": state.transcript,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
