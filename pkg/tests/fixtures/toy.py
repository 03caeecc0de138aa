"""Ten-instance toy benchmark with a pure, content-keyed responder.

Outcome plan: p0..p6 solve at the ground truth (correct), p7/p8 solve 20%
off (incorrect), p9 never executes (failed, full fallback debate). Group
"alpha" (p0..p4) scores 100%, group "beta" (p5..p9) scores 40%, so the
macro average is 70.0.

Both teams always receive identical responses, so duplicate-fingerprint
cassette entries carry identical payloads and replay is order-insensitive,
which is what makes byte-identical reports at any parallelism possible.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

from agora.bench import Benchmark, load_benchmark
from agora.debate import DebateConfig
from agora.executor import Executor, ExecutorConfig
from agora.gateway import Cassette, ChatRequest, Gateway, HashedEmbedding, RecordChatBackend, ReplayChatBackend
from agora.team import AgentTeam, TeamConfig

from helpers import KeyedBackend

GROUND_TRUTHS = [12.0, 40.0, 7.5, 100.0, 3.25, 55.0, 81.0, 10.0, 64.0, 20.0]

INSTANCES = [
    {
        "id": f"p{i}",
        "benchmark": "alpha" if i < 5 else "beta",
        "description": f"[P{i}] plan production to minimize cost for order {i}",
        "ground_truth": GROUND_TRUTHS[i],
    }
    for i in range(10)
]

_MARKER = re.compile(r"\[P(\d)\]")


def toy_responder(request: ChatRequest) -> str:
    prompt = request.messages[0].content
    match = _MARKER.search(prompt)
    assert match, f"prompt without instance marker: {prompt[:80]}"
    k = int(match.group(1))
    if "You are the Formulator" in prompt:
        return f"<formulation>Objective: minimize cost of order {k}</formulation>"
    if "You are the Programmer" in prompt:
        return f"<python>{_code(k)}</python>"
    if "You are the Debugger" in prompt:
        return f"<python>{_code(k)}</python>"  # p9 stays broken by design
    if "agentic debate" in prompt:
        return (
            f"<formulation>Objective: minimize cost of order {k} (revised)</formulation>"
            f"\n<python>{_code(k)}</python>"
        )
    raise AssertionError(f"unexpected prompt stage: {prompt[:80]}")


def _code(k: int) -> str:
    if k == 9:
        return "raise ValueError('order 9 never parses')"
    value = GROUND_TRUTHS[k] * (1.2 if k in (7, 8) else 1.0)
    return f"print('OBJECTIVE_VALUE:', {value!r})"


def write_benchmark_file(path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for instance in INSTANCES:
            fh.write(json.dumps(instance) + "\n")
    return path


def load_toy_benchmark(tmp_path: Path) -> Benchmark:
    return load_benchmark(write_benchmark_file(tmp_path / "toy.jsonl"))


def make_toy_teams(
    cassette: Cassette | None = None,
    mode: str = "live",
    exec_timeout: float = 15.0,
) -> tuple[AgentTeam, AgentTeam]:
    """Teams over the keyed responder, optionally recording or replaying."""
    executor = Executor(ExecutorConfig(timeout_seconds=exec_timeout, pool_size=4))

    def backend():
        live = KeyedBackend(toy_responder)
        if mode == "record":
            assert cassette is not None
            return RecordChatBackend(live, cassette)
        if mode == "replay":
            assert cassette is not None
            return ReplayChatBackend(cassette)
        return live

    gateway = Gateway(
        backends={"ba": backend(), "bb": backend()}, embedder=HashedEmbedding(16)
    )
    team_a = AgentTeam(
        TeamConfig(team_id="team_a", backend_id="ba", memory_enabled=False,
                   exec_timeout=exec_timeout),
        gateway, executor,
    )
    team_b = AgentTeam(
        TeamConfig(team_id="team_b", backend_id="bb", memory_enabled=False,
                   exec_timeout=exec_timeout),
        gateway, executor,
    )
    return team_a, team_b


def toy_debate_config() -> DebateConfig:
    return DebateConfig(tolerance=0.05, max_rounds=3, memory_enabled=False)
