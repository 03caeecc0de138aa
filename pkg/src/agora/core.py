"""Shared domain types for problems and candidate solutions."""

from __future__ import annotations

from dataclasses import dataclass

from .executor import ExecutionFeedback


@dataclass(frozen=True)
class ProblemInstance:
    """One natural-language optimization task.

    ``ground_truth`` is the reference objective used only by evaluation; it
    is never shown to the agents.
    """

    id: str
    description: str
    ground_truth: float | None = None
    benchmark: str = ""

    def __post_init__(self) -> None:
        if not self.description.strip():
            raise ValueError("problem description must be non-empty")
        if not self.id:
            raise ValueError("problem id must be non-empty")


@dataclass(frozen=True)
class CandidateSolution:
    """One team's end-to-end answer: formulation, code, solver outcome.

    ``objective`` is ``None`` when the run failed; this is the single
    failure sentinel used across trigger checks, memory gates, and scoring.
    """

    formulation: str
    code: str
    objective: float | None
    feedback: ExecutionFeedback
    team_id: str
    debug_attempts: int = 0

    def __post_init__(self) -> None:
        solved = self.feedback.status == "solved"
        if (self.objective is None) == solved:
            raise ValueError("objective must be set exactly when feedback.status is 'solved'")
        if self.debug_attempts < 0:
            raise ValueError("debug_attempts must be non-negative")


def objective_text(value: float | None) -> str:
    """Render an objective for prompts and logs."""
    return "FAILURE" if value is None else repr(value)
