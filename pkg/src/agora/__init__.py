"""Solver-verified optimization modeling with debating agent teams and a
read-write memory bank."""

from .bench import (
    Benchmark,
    DuplicateId,
    EvaluationReport,
    EvaluationRule,
    SchemaError,
    evaluate_answer,
    load_benchmark,
    run_benchmark,
)
from .core import CandidateSolution, ProblemInstance
from .debate import (
    DebateConfig,
    DebateState,
    pick_consensus,
    run_debate,
    run_round,
    should_trigger,
    stability_fallback,
)
from .executor import ExecutionFeedback, Executor, ExecutorConfig, parse_objective
from .gateway import (
    BackendUnavailable,
    Cassette,
    CassetteMiss,
    ChatRequest,
    ChatResponse,
    ContextOverflow,
    DimensionMismatch,
    EmbeddingVector,
    EmptyText,
    Gateway,
    HashedEmbedding,
    HttpChatBackend,
    HttpEmbedding,
    Message,
    RecordChatBackend,
    ReplayChatBackend,
)
from .memory import DebateEntry, DebugEntry, MemoryBank, SolutionEntry
from .team import AgentTeam, DebugEpisode, MissingBlock, TeamConfig, TeamRunResult

__version__ = "0.1.0"

__all__ = [
    "AgentTeam",
    "BackendUnavailable",
    "Benchmark",
    "CandidateSolution",
    "Cassette",
    "CassetteMiss",
    "ChatRequest",
    "ChatResponse",
    "ContextOverflow",
    "DebateConfig",
    "DebateEntry",
    "DebateState",
    "DebugEntry",
    "DebugEpisode",
    "DimensionMismatch",
    "DuplicateId",
    "EmbeddingVector",
    "EmptyText",
    "EvaluationReport",
    "EvaluationRule",
    "ExecutionFeedback",
    "Executor",
    "ExecutorConfig",
    "Gateway",
    "HashedEmbedding",
    "HttpChatBackend",
    "HttpEmbedding",
    "MemoryBank",
    "Message",
    "MissingBlock",
    "ProblemInstance",
    "RecordChatBackend",
    "ReplayChatBackend",
    "SchemaError",
    "SolutionEntry",
    "TeamConfig",
    "TeamRunResult",
    "evaluate_answer",
    "load_benchmark",
    "parse_objective",
    "pick_consensus",
    "run_benchmark",
    "run_debate",
    "run_round",
    "should_trigger",
    "stability_fallback",
]
