"""One agent team: the formulate -> program -> (execute <-> debug) pipeline.

A team owns a backend id, prompt assembly, and the retry loop. It reads
memory but never writes it: failed-then-fixed episodes are reported to the
caller, which owns write-back policy.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from . import prompts
from .core import CandidateSolution, ProblemInstance
from .executor import ExecutionFeedback, Executor
from .gateway import ChatRequest, Gateway, Message
from .memory import MemoryBank, render_debate_entries, render_debug_entries, render_solution_entries

logger = logging.getLogger(__name__)

EMPTY_CONTEXT = "(none)"


class MissingBlock(Exception):
    """The completion carried no usable tagged block, even after a re-prompt."""

    def __init__(self, tag: str, detail: str = ""):
        super().__init__(f"no <{tag}> block in completion" + (f" ({detail})" if detail else ""))
        self.tag = tag


@dataclass(frozen=True)
class TeamConfig:
    team_id: str
    backend_id: str
    retry_budget: int = 3
    exec_timeout: float = 120.0
    memory_enabled: bool = True
    solution_top_n: int = 4
    debug_top_n: int = 3
    debate_top_n: int = 2
    entry_char_budget: int = 2000
    max_tokens: int = 16384
    temperature: float = 0.01

    def __post_init__(self) -> None:
        if self.retry_budget < 1:
            raise ValueError("retry_budget must be >= 1")
        if self.exec_timeout <= 0:
            raise ValueError("exec_timeout must be positive")


@dataclass(frozen=True)
class DebugEpisode:
    """A failure that the next revision repaired; raw material for debug memory."""

    problem: ProblemInstance
    formulation: str
    failed_code: str
    log: ExecutionFeedback
    fixed_code: str


@dataclass
class TeamRunResult:
    candidate: CandidateSolution
    debug_episodes: list[DebugEpisode] = field(default_factory=list)


def extract_block(text: str, tag: str) -> str:
    """Return the text strictly inside ``<tag>...</tag>``.

    Tag matching is case-insensitive and whitespace-tolerant. Multiple
    blocks: first one wins with a warning. Nested or unmatched tags raise
    :class:`MissingBlock`.
    """
    pattern = re.compile(rf"<\s*{tag}\s*>(.*?)<\s*/\s*{tag}\s*>", re.DOTALL | re.IGNORECASE)
    matches = pattern.findall(text)
    if not matches:
        raise MissingBlock(tag)
    inner = matches[0]
    if re.search(rf"<\s*{tag}\s*>", inner, re.IGNORECASE):
        raise MissingBlock(tag, "nested tags")
    if len(matches) > 1:
        logger.warning("completion contained %d <%s> blocks; using the first", len(matches), tag)
    return inner.strip()


_RETRY_REMINDER = (
    "Your previous reply did not contain the required <{tag}>...</{tag}> block. "
    "Reply again with exactly one such block and nothing else outside it."
)


class AgentTeam:
    def __init__(
        self,
        config: TeamConfig,
        gateway: Gateway,
        executor: Executor,
        memory: MemoryBank | None = None,
    ):
        self.config = config
        self.gateway = gateway
        self.executor = executor
        self.memory = memory

    @property
    def team_id(self) -> str:
        return self.config.team_id

    # -- prompt assembly (pure: same inputs, same request) --------------

    def build_formulate_request(self, problem: ProblemInstance, memory_context: str) -> ChatRequest:
        prompt = prompts.render(
            "formulator",
            solution_memory=memory_context or EMPTY_CONTEXT,
            problem=problem.description,
        )
        return self._request(prompt)

    def build_program_request(
        self, problem: ProblemInstance, formulation: str, memory_context: str
    ) -> ChatRequest:
        prompt = prompts.render(
            "programmer",
            solution_memory=memory_context or EMPTY_CONTEXT,
            problem=problem.description,
            formulation=formulation,
        )
        return self._request(prompt)

    def build_debug_request(
        self,
        problem: ProblemInstance,
        formulation: str,
        code: str,
        feedback: ExecutionFeedback,
        memory_context: str,
    ) -> ChatRequest:
        prompt = prompts.render(
            "debugger",
            problem=problem.description,
            formulation=formulation,
            current_code=code,
            exec_status=feedback.status,
            solver_flag=str(feedback.exit_code),
            stderr=feedback.stderr,
            debug_memory=memory_context or EMPTY_CONTEXT,
        )
        return self._request(prompt)

    def build_debate_request(
        self,
        problem: ProblemInstance,
        mine: CandidateSolution,
        other: CandidateSolution,
        debate_context: str,
    ) -> ChatRequest:
        prompt = prompts.render(
            "debate",
            problem=problem.description,
            my_formulation=mine.formulation,
            my_code=mine.code,
            other_formulation=other.formulation,
            other_code=other.code,
            debate_memory=debate_context or EMPTY_CONTEXT,
        )
        return self._request(prompt)

    def _request(self, prompt: str) -> ChatRequest:
        return ChatRequest(
            backend_id=self.config.backend_id,
            messages=(Message("user", prompt),),
            max_tokens=self.config.max_tokens,
            temperature=self.config.temperature,
        )

    # -- pipeline stages -------------------------------------------------

    def formulate(self, problem: ProblemInstance, memory_context: str = "") -> str:
        request = self.build_formulate_request(problem, memory_context)
        return self._complete_block(request, "formulation")

    def program(self, problem: ProblemInstance, formulation: str, memory_context: str = "") -> str:
        if not formulation.strip():
            raise ValueError("formulation must be non-empty")
        request = self.build_program_request(problem, formulation, memory_context)
        return self._complete_block(request, "python")

    def debug(
        self,
        problem: ProblemInstance,
        formulation: str,
        code: str,
        feedback: ExecutionFeedback,
        memory_context: str = "",
    ) -> str:
        if feedback.status == "solved":
            raise ValueError("debug requires a failed execution")
        request = self.build_debug_request(problem, formulation, code, feedback, memory_context)
        return self._complete_block(request, "python")

    def revise(
        self,
        problem: ProblemInstance,
        mine: CandidateSolution,
        other: CandidateSolution,
        debate_context: str = "",
    ) -> tuple[str, str] | None:
        """Debate-round revision; ``None`` when the completion stayed blockless
        after the re-prompt (the caller carries the candidate forward)."""
        request = self.build_debate_request(problem, mine, other, debate_context)
        response = self.gateway.complete(request)
        try:
            return extract_block(response.text, "formulation"), extract_block(response.text, "python")
        except MissingBlock as miss:
            retry = self._retry_text(request, response.text, miss.tag)
            try:
                return extract_block(retry, "formulation"), extract_block(retry, "python")
            except MissingBlock:
                return None

    def _complete_block(self, request: ChatRequest, tag: str) -> str:
        response = self.gateway.complete(request)
        try:
            return extract_block(response.text, tag)
        except MissingBlock:
            retry = self._retry_text(request, response.text, tag)
            return extract_block(retry, tag)

    def _retry_text(self, request: ChatRequest, reply: str, tag: str) -> str:
        retry_request = ChatRequest(
            backend_id=request.backend_id,
            messages=request.messages
            + (
                Message("assistant", reply),
                Message("user", _RETRY_REMINDER.format(tag=tag)),
            ),
            max_tokens=request.max_tokens,
            temperature=request.temperature,
        )
        return self.gateway.complete(retry_request).text

    # -- memory context ---------------------------------------------------

    def _solution_context(self, problem: ProblemInstance) -> str:
        assert self.memory is not None
        entries = self.memory.retrieve(problem.description, "solution", self.config.solution_top_n)
        if not entries:
            return ""
        rendered = render_solution_entries(entries, self.config.entry_char_budget)
        if len(entries) < 2:
            return rendered
        # With several similar solved cases, distill them once and share the
        # analysis between the formulating and programming stages.
        request = self._request(
            prompts.render(
                "retrieval_analysis",
                current_problem_desc=problem.description,
                full_cases=rendered,
            )
        )
        return self.gateway.complete(request).text.strip()

    def _debug_context(
        self, problem: ProblemInstance, formulation: str, code: str, feedback: ExecutionFeedback
    ) -> str:
        assert self.memory is not None
        signature = self.memory.error_signature(problem, formulation, code, feedback)
        entries = self.memory.retrieve(signature, "debug", self.config.debug_top_n)
        if not entries:
            return ""
        return render_debug_entries(entries, self.config.entry_char_budget)

    def debate_context(self, problem: ProblemInstance, discrepancy: str) -> str:
        if self.memory is None:
            return ""
        query = f"{problem.description}\n{discrepancy}"
        entries = self.memory.retrieve(query, "debate", self.config.debate_top_n)
        if not entries:
            return ""
        return render_debate_entries(entries, self.config.entry_char_budget)

    # -- end-to-end candidate generation ----------------------------------

    def generate_candidate(self, problem: ProblemInstance) -> TeamRunResult:
        """Run the full pipeline for one instance.

        Never raises on model misbehavior: a pipeline abort becomes a
        FAILURE candidate so the debate can still proceed.
        """
        memory_on = self.config.memory_enabled and self.memory is not None
        context = self._solution_context(problem) if memory_on else ""
        try:
            formulation = self.formulate(problem, context)
        except MissingBlock as exc:
            return TeamRunResult(self._aborted_candidate("", "", "formulating", exc))
        try:
            code = self.program(problem, formulation, context)
        except MissingBlock as exc:
            return TeamRunResult(self._aborted_candidate(formulation, "", "programming", exc))

        objective, feedback = self.executor.run_code(code, timeout=self.config.exec_timeout)
        attempts = 0
        episodes: list[DebugEpisode] = []
        while objective is None and attempts < self.config.retry_budget:
            debug_context = (
                self._debug_context(problem, formulation, code, feedback) if memory_on else ""
            )
            try:
                revised = self.debug(problem, formulation, code, feedback, debug_context)
            except MissingBlock as exc:
                return TeamRunResult(
                    self._aborted_candidate(formulation, code, "debugging", exc), episodes
                )
            attempts += 1
            failed_code, failed_feedback = code, feedback
            code = revised
            objective, feedback = self.executor.run_code(code, timeout=self.config.exec_timeout)
            if objective is not None:
                episodes.append(
                    DebugEpisode(problem, formulation, failed_code, failed_feedback, code)
                )
        candidate = CandidateSolution(
            formulation=formulation,
            code=code,
            objective=objective,
            feedback=feedback,
            team_id=self.config.team_id,
            debug_attempts=attempts,
        )
        return TeamRunResult(candidate, episodes)

    def _aborted_candidate(
        self, formulation: str, code: str, stage: str, exc: MissingBlock
    ) -> CandidateSolution:
        # Nothing ran, so launch_error is the only status that fits: the
        # pipeline never produced a launchable script at this stage.
        feedback = ExecutionFeedback(
            status="launch_error",
            stderr=f"agent pipeline aborted while {stage}: {exc}",
        )
        return CandidateSolution(
            formulation=formulation,
            code=code,
            objective=None,
            feedback=feedback,
            team_id=self.config.team_id,
            debug_attempts=0,
        )
