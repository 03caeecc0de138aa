"""Shared test doubles: scripted chat backends and controllable embeddings."""

from __future__ import annotations

import re
import threading
from collections import deque
from typing import Callable, Iterable

from agora.core import CandidateSolution
from agora.executor import ExecutionFeedback
from agora.gateway import BackendUnavailable, ChatRequest, ChatResponse, HashedEmbedding


class ScriptedBackend:
    """Chat backend answering from a fixed queue, in order."""

    def __init__(self, responses: Iterable[str]):
        self._queue = deque(responses)
        self._lock = threading.Lock()
        self.requests: list[ChatRequest] = []

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.requests.append(request)
            if not self._queue:
                raise BackendUnavailable("scripted backend exhausted")
            text = self._queue.popleft()
        return ChatResponse(text=text, usage=None, backend_id=request.backend_id)


class KeyedBackend:
    """Chat backend whose reply is a pure function of the request.

    Safe under concurrency in both record and replay fixtures: identical
    requests always map to identical responses.
    """

    def __init__(self, responder: Callable[[ChatRequest], str]):
        self._responder = responder
        self._lock = threading.Lock()
        self.requests: list[ChatRequest] = []

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.requests.append(request)
        return ChatResponse(text=self._responder(request), usage=None, backend_id=request.backend_id)


class FailingBackend:
    def complete(self, request: ChatRequest) -> ChatResponse:
        raise BackendUnavailable("backend intentionally down")


_VEC_PATTERN = re.compile(r"vec\(([-0-9eE., +]+)\)")


class VectorTextEmbedding:
    """Embedding provider that honors inline ``vec(x, y, ...)`` directives.

    Text containing a vec(...) literal embeds to exactly that vector (padded
    with zeros to the provider dimension); anything else falls back to the
    hashed provider. Lets tests pick key and query vectors precisely while
    exercising the full embed path.
    """

    def __init__(self, dim: int):
        self._dim = dim
        self._fallback = HashedEmbedding(dim)

    @property
    def dim(self) -> int:
        return self._dim

    def embed(self, text: str) -> list[float]:
        match = _VEC_PATTERN.search(text)
        if match is None:
            return self._fallback.embed(text)
        values = [float(tok) for tok in match.group(1).split(",") if tok.strip()]
        if len(values) > self._dim:
            raise ValueError(f"vec(...) has {len(values)} components, provider dim is {self._dim}")
        return values + [0.0] * (self._dim - len(values))


def make_candidate(
    objective: float | None,
    formulation: str = "Objective: minimize cost",
    code: str = "print('OBJECTIVE_VALUE:', 1.0)",
    team_id: str = "team_a",
    debug_attempts: int = 0,
    status: str | None = None,
) -> CandidateSolution:
    if status is None:
        status = "solved" if objective is not None else "runtime_error"
    feedback = ExecutionFeedback(
        status=status,
        stdout=f"OBJECTIVE_VALUE: {objective}" if objective is not None else "",
        stderr="" if objective is not None else "Traceback (most recent call last):\nValueError: boom",
        exit_code=0 if objective is not None else 1,
        wall_time=0.01,
    )
    return CandidateSolution(
        formulation=formulation,
        code=code,
        objective=objective,
        feedback=feedback,
        team_id=team_id,
        debug_attempts=debug_attempts,
    )
