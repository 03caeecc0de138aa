"""TOML configuration: backends, teams, debate, memory, executor, evaluation.

Every evaluation-protocol constant lives here with its default (context
length 16384, temperature 0.01, debate tolerance 0.05 and 3 rounds,
retrieval top-N 4/3/2, 3 retries, 120 s execution timeout, 5% / 1e-3
scoring tolerances, 90 s re-verify timeout), so a config file only has to
name backends for a live run.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .bench import EvaluationRule
from .debate import DebateConfig
from .executor import Executor, ExecutorConfig
from .gateway import (
    Cassette,
    ChatBackend,
    Gateway,
    HashedEmbedding,
    HttpChatBackend,
    HttpEmbedding,
    RecordChatBackend,
    ReplayChatBackend,
)
from .memory import MemoryBank
from .team import AgentTeam, TeamConfig

DEFAULT_EMBEDDING_DIM = 64


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class BackendSettings:
    name: str
    kind: str  # http | record | replay
    base_url: str = ""
    model: str = ""
    api_key_env: str = ""
    max_tokens: int = 16384
    temperature: float = 0.01


@dataclass
class AppConfig:
    backends: dict[str, BackendSettings]
    cassette: str | None
    embedding: str  # hashed | http
    embedding_dim: int
    embedding_base_url: str
    embedding_model: str
    embedding_api_key_env: str
    team_a: dict[str, Any]
    team_b: dict[str, Any]
    debate: DebateConfig
    memory_dir: str | None
    write_back: str
    summary_backend: str | None
    memory_shared: bool
    signature_budget: int
    executor: ExecutorConfig
    evaluation: EvaluationRule
    reverify_timeout: float
    base_dir: Path


@dataclass
class Engine:
    """Everything a run needs, wired together from one config file."""

    gateway: Gateway
    executor: Executor
    banks: tuple[MemoryBank, ...]
    team_a: AgentTeam
    team_b: AgentTeam
    debate_config: DebateConfig
    evaluation: EvaluationRule
    write_back: str
    reverify_timeout: float

    @property
    def teams(self) -> tuple[AgentTeam, AgentTeam]:
        return (self.team_a, self.team_b)


def load_config(path: str | Path) -> AppConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    try:
        return _parse_config(raw, base_dir=path.parent)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_config(raw: dict[str, Any], base_dir: Path) -> AppConfig:
    gateway_cfg = raw.get("gateway", {})
    backends: dict[str, BackendSettings] = {}
    for name, settings in raw.get("backends", {}).items():
        kind = settings.get("kind", "http")
        if kind not in ("http", "record", "replay"):
            raise ConfigError(f"backend {name!r}: invalid kind {kind!r}")
        backends[name] = BackendSettings(
            name=name,
            kind=kind,
            base_url=settings.get("base_url", ""),
            model=settings.get("model", ""),
            api_key_env=settings.get("api_key_env", ""),
            max_tokens=int(settings.get("max_tokens", 16384)),
            temperature=float(settings.get("temperature", 0.01)),
        )
    memory_cfg = raw.get("memory", {})
    write_back = memory_cfg.get("write_back", "online")
    if write_back not in ("online", "offline", "disabled"):
        raise ConfigError(f"memory.write_back invalid: {write_back!r}")
    debate_cfg = raw.get("debate", {})
    executor_cfg = raw.get("executor", {})
    eval_cfg = raw.get("evaluation", {})
    runner_path = executor_cfg.get("runner_path") or None
    if runner_path is not None and not Path(runner_path).is_absolute():
        runner_path = str(base_dir / runner_path)
    return AppConfig(
        backends=backends,
        cassette=gateway_cfg.get("cassette"),
        embedding=gateway_cfg.get("embedding", "hashed"),
        embedding_dim=int(gateway_cfg.get("embedding_dim", DEFAULT_EMBEDDING_DIM)),
        embedding_base_url=gateway_cfg.get("embedding_base_url", ""),
        embedding_model=gateway_cfg.get("embedding_model", ""),
        embedding_api_key_env=gateway_cfg.get("embedding_api_key_env", ""),
        team_a=raw.get("team_a", {}),
        team_b=raw.get("team_b", {}),
        debate=DebateConfig(
            tolerance=float(debate_cfg.get("tolerance", 0.05)),
            max_rounds=int(debate_cfg.get("max_rounds", 3)),
            memory_enabled=bool(debate_cfg.get("memory_enabled", True)),
        ),
        memory_dir=memory_cfg.get("dir"),
        write_back=write_back,
        summary_backend=memory_cfg.get("summary_backend"),
        memory_shared=bool(memory_cfg.get("shared", True)),
        signature_budget=int(memory_cfg.get("signature_budget", 240)),
        executor=ExecutorConfig(
            interpreter_argv=tuple(executor_cfg.get("interpreter", [sys.executable])),
            timeout_seconds=float(executor_cfg.get("timeout_seconds", 120.0)),
            pool_size=int(executor_cfg.get("pool_size", 4)),
            use_runner_harness=bool(executor_cfg.get("use_runner_harness", False)),
            runner_path=runner_path,
        ),
        evaluation=EvaluationRule(
            relative_tolerance=float(eval_cfg.get("relative_tolerance", 0.05)),
            absolute_tolerance=float(eval_cfg.get("absolute_tolerance", 1e-3)),
        ),
        reverify_timeout=float(eval_cfg.get("reverify_timeout", 90.0)),
        base_dir=base_dir,
    )


def _team_config(name: str, settings: dict[str, Any], backends: dict[str, BackendSettings]) -> TeamConfig:
    backend_name = settings.get("backend")
    if not backend_name:
        raise ConfigError(f"[{name}] must name a backend")
    backend = backends.get(backend_name)
    if backend is None:
        raise ConfigError(f"[{name}] references unknown backend {backend_name!r}")
    return TeamConfig(
        team_id=settings.get("team_id", name),
        backend_id=backend_name,
        retry_budget=int(settings.get("retry_budget", 3)),
        exec_timeout=float(settings.get("exec_timeout", 120.0)),
        memory_enabled=bool(settings.get("memory_enabled", True)),
        solution_top_n=int(settings.get("solution_top_n", 4)),
        debug_top_n=int(settings.get("debug_top_n", 3)),
        debate_top_n=int(settings.get("debate_top_n", 2)),
        entry_char_budget=int(settings.get("entry_char_budget", 2000)),
        max_tokens=backend.max_tokens,
        temperature=backend.temperature,
    )


def _build_backend(settings: BackendSettings, cassette: Cassette | None, mode: str | None) -> ChatBackend:
    kind = settings.kind if mode is None else {"live": "http", "record": "record", "replay": "replay"}[mode]
    if kind == "replay":
        if cassette is None:
            raise ConfigError(f"backend {settings.name!r}: replay requires gateway.cassette")
        return ReplayChatBackend(cassette)
    if not settings.base_url or not settings.model:
        raise ConfigError(f"backend {settings.name!r}: {kind} requires base_url and model")
    api_key = os.environ.get(settings.api_key_env) if settings.api_key_env else None
    live = HttpChatBackend(base_url=settings.base_url, model=settings.model, api_key=api_key)
    if kind == "record":
        if cassette is None:
            raise ConfigError(f"backend {settings.name!r}: record requires gateway.cassette")
        return RecordChatBackend(live, cassette)
    return live


def build_engine(config: AppConfig, mode: str | None = None) -> Engine:
    """Assemble gateway, executor, memory, and teams. ``mode`` overrides every
    backend's configured kind (live | record | replay)."""
    if mode is not None and mode not in ("live", "record", "replay"):
        raise ConfigError(f"invalid mode: {mode!r}")
    if not config.backends:
        raise ConfigError("no backends configured")

    cassette: Cassette | None = None
    needs_cassette = mode in ("record", "replay") or any(
        b.kind in ("record", "replay") for b in config.backends.values()
    )
    if config.cassette is not None and needs_cassette:
        cassette_path = Path(config.cassette)
        if not cassette_path.is_absolute():
            cassette_path = config.base_dir / cassette_path
        replaying = mode == "replay" or (
            mode is None and any(b.kind == "replay" for b in config.backends.values())
        )
        if replaying:
            if not cassette_path.exists():
                raise ConfigError(f"cassette not found: {cassette_path}")
            cassette = Cassette.load(cassette_path)
        else:
            cassette = Cassette(path=cassette_path)
    elif needs_cassette:
        raise ConfigError("record/replay requires gateway.cassette")

    if config.embedding == "hashed":
        embedder = HashedEmbedding(dim=config.embedding_dim)
        embed_mode = "live"  # deterministic and offline; no cassette involvement
    elif config.embedding == "http":
        if not config.embedding_base_url or not config.embedding_model:
            raise ConfigError("http embedding requires embedding_base_url and embedding_model")
        api_key = (
            os.environ.get(config.embedding_api_key_env) if config.embedding_api_key_env else None
        )
        embedder = HttpEmbedding(
            base_url=config.embedding_base_url, model=config.embedding_model, api_key=api_key
        )
        embed_mode = {"record": "record", "replay": "replay"}.get(mode or "", "live")
    else:
        raise ConfigError(f"unknown embedding provider: {config.embedding!r}")

    chat_backends = {
        name: _build_backend(settings, cassette, mode)
        for name, settings in config.backends.items()
    }
    gateway = Gateway(
        backends=chat_backends, embedder=embedder, cassette=cassette, embed_mode=embed_mode
    )
    executor = Executor(config.executor)

    banks: tuple[MemoryBank, ...] = ()
    team_a_cfg = _team_config("team_a", config.team_a, config.backends)
    team_b_cfg = _team_config("team_b", config.team_b, config.backends)
    memory_wanted = (
        team_a_cfg.memory_enabled or team_b_cfg.memory_enabled or config.debate.memory_enabled
    )
    bank_a = bank_b = None
    if memory_wanted:
        def make_bank(subdir: str | None) -> MemoryBank:
            directory = None
            if config.memory_dir is not None:
                directory = Path(config.memory_dir)
                if not directory.is_absolute():
                    directory = config.base_dir / directory
                if subdir is not None:
                    directory = directory / subdir
            return MemoryBank(
                gateway,
                dim=config.embedding_dim,
                memory_dir=directory,
                summary_backend_id=config.summary_backend,
                signature_budget=config.signature_budget,
            )

        if config.memory_shared:
            bank = make_bank(None)
            bank_a = bank_b = bank
            banks = (bank,)
        else:
            bank_a, bank_b = make_bank("team_a"), make_bank("team_b")
            banks = (bank_a, bank_b)

    team_a = AgentTeam(team_a_cfg, gateway, executor, memory=bank_a)
    team_b = AgentTeam(team_b_cfg, gateway, executor, memory=bank_b)
    return Engine(
        gateway=gateway,
        executor=executor,
        banks=banks,
        team_a=team_a,
        team_b=team_b,
        debate_config=config.debate,
        evaluation=config.evaluation,
        write_back=config.write_back,
        reverify_timeout=config.reverify_timeout,
    )
