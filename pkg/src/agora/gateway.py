"""Uniform access to chat completions and text embeddings.

Three interchangeable chat backends (live HTTP, record, replay) plus two
embedding providers (deterministic hashed bag-of-tokens for offline use, an
OpenAI-compatible HTTP provider for production). Record and replay work
through a cassette file so every higher layer can run without network access.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
import threading
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Protocol

import requests

logger = logging.getLogger(__name__)

DEFAULT_MAX_TOKENS = 16384
DEFAULT_TEMPERATURE = 0.01

_ROLES = ("system", "user", "assistant")


class GatewayError(Exception):
    """Base class for gateway failures."""


class BackendUnavailable(GatewayError):
    """Network, auth, or provider failure. Retriable."""


class CassetteMiss(GatewayError):
    """Replay mode could not find a stored response for a fingerprint.

    Usually means a prompt drifted since the cassette was recorded.
    """

    def __init__(self, fingerprint: str, kind: str):
        super().__init__(f"no recorded {kind} response for fingerprint {fingerprint}")
        self.fingerprint = fingerprint
        self.kind = kind


class ContextOverflow(GatewayError):
    """The request exceeds the backend's context limit."""


class EmptyText(GatewayError):
    """Text was empty (or embedded to an all-zero vector)."""


class DimensionMismatch(GatewayError):
    """An embedding provider returned a vector of unexpected length."""


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in _ROLES:
            raise ValueError(f"invalid message role: {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion request.

    ``backend_id`` names a configured backend; it is deliberately excluded
    from the request fingerprint so one cassette can drive any backend
    pairing.
    """

    backend_id: str
    messages: tuple[Message, ...]
    max_tokens: int = DEFAULT_MAX_TOKENS
    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0].role not in ("system", "user"):
            raise ValueError("first message role must be system or user")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")

    def fingerprint(self) -> str:
        return _fingerprint(
            {
                "kind": "chat",
                "messages": [{"role": m.role, "content": m.content} for m in self.messages],
                "max_tokens": self.max_tokens,
                "temperature": self.temperature,
            }
        )


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: dict[str, Any] | None = None
    backend_id: str = ""


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    dim: int

    def __post_init__(self) -> None:
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if len(self.values) != self.dim:
            raise ValueError(f"vector length {len(self.values)} != dim {self.dim}")

    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.values))


def _fingerprint(payload: dict[str, Any]) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def embed_fingerprint(text: str) -> str:
    return _fingerprint({"kind": "embed", "text": text})


# ---------------------------------------------------------------------------
# Cassette
# ---------------------------------------------------------------------------


@dataclass
class CassetteEntry:
    fingerprint: str
    kind: str  # "chat" | "embed"
    request_summary: str
    response: dict[str, Any]

    def to_json(self) -> str:
        return json.dumps(
            {
                "fingerprint": self.fingerprint,
                "kind": self.kind,
                "request_summary": self.request_summary,
                "response": self.response,
            },
            ensure_ascii=True,
        )


class Cassette:
    """Ordered store of (fingerprint, response) pairs, JSONL on disk.

    Duplicate fingerprints are kept and consumed in recording order (queue
    semantics): the debate loop legitimately reissues near-identical prompts.
    A single lock serializes appends and queue consumption.
    """

    def __init__(self, path: str | Path | None = None, entries: Iterable[CassetteEntry] = ()):
        self.path = Path(path) if path is not None else None
        self.entries: list[CassetteEntry] = list(entries)
        self._queues: dict[str, deque[CassetteEntry]] = {}
        self._lock = threading.Lock()
        for entry in self.entries:
            self._queues.setdefault(entry.fingerprint, deque()).append(entry)

    @classmethod
    def load(cls, path: str | Path) -> "Cassette":
        entries = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    raw = json.loads(line)
                    entries.append(
                        CassetteEntry(
                            fingerprint=raw["fingerprint"],
                            kind=raw["kind"],
                            request_summary=raw.get("request_summary", ""),
                            response=raw["response"],
                        )
                    )
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ValueError(f"{path}:{lineno}: corrupt cassette line: {exc}") from exc
        return cls(path=path, entries=entries)

    def append(self, entry: CassetteEntry) -> None:
        with self._lock:
            self.entries.append(entry)
            self._queues.setdefault(entry.fingerprint, deque()).append(entry)
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(entry.to_json() + "\n")

    def consume(self, fingerprint: str, kind: str) -> CassetteEntry:
        with self._lock:
            queue = self._queues.get(fingerprint)
            if not queue:
                raise CassetteMiss(fingerprint, kind)
            return queue.popleft()

    def __len__(self) -> int:
        return len(self.entries)


def _summarize_request(request: ChatRequest) -> str:
    last = request.messages[-1].content
    head = re.sub(r"\s+", " ", last).strip()[:100]
    return f"chat[{len(request.messages)} msgs]: {head}"


# ---------------------------------------------------------------------------
# Chat backends
# ---------------------------------------------------------------------------


class ChatBackend(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


_CONTEXT_ERROR_HINTS = ("context length", "maximum context", "context window", "too many tokens")


class HttpChatBackend:
    """OpenAI-compatible chat-completions client (single POST per call)."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        request_timeout: float = 300.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.request_timeout = request_timeout

    def complete(self, request: ChatRequest) -> ChatResponse:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        }
        try:
            resp = requests.post(
                f"{self.base_url}/chat/completions",
                json=payload,
                headers=headers,
                timeout=self.request_timeout,
            )
        except requests.RequestException as exc:
            raise BackendUnavailable(f"chat request failed: {exc}") from exc
        if resp.status_code != 200:
            body = resp.text[:500]
            if resp.status_code == 400 and any(h in body.lower() for h in _CONTEXT_ERROR_HINTS):
                raise ContextOverflow(body)
            raise BackendUnavailable(f"HTTP {resp.status_code}: {body}")
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable(f"malformed completion payload: {exc}") from exc
        return ChatResponse(text=text, usage=data.get("usage"), backend_id=request.backend_id)


class ReplayChatBackend:
    """Answers every request from a cassette; never touches the network."""

    def __init__(self, cassette: Cassette):
        self.cassette = cassette

    def complete(self, request: ChatRequest) -> ChatResponse:
        entry = self.cassette.consume(request.fingerprint(), "chat")
        return ChatResponse(
            text=entry.response["text"],
            usage=entry.response.get("usage"),
            backend_id=request.backend_id,
        )


class RecordChatBackend:
    """Delegates to an inner backend and appends every exchange to a cassette."""

    def __init__(self, inner: ChatBackend, cassette: Cassette):
        self.inner = inner
        self.cassette = cassette

    def complete(self, request: ChatRequest) -> ChatResponse:
        response = self.inner.complete(request)
        self.cassette.append(
            CassetteEntry(
                fingerprint=request.fingerprint(),
                kind="chat",
                request_summary=_summarize_request(request),
                response={"text": response.text, "usage": response.usage},
            )
        )
        return response


# ---------------------------------------------------------------------------
# Embedding providers
# ---------------------------------------------------------------------------


class EmbeddingProvider(Protocol):
    @property
    def dim(self) -> int: ...

    def embed(self, text: str) -> list[float]: ...


class HashedEmbedding:
    """Deterministic hashed bag-of-tokens embedding. No network, stable
    across runs and platforms; intended for tests and offline replay."""

    def __init__(self, dim: int = 64):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self._dim = dim

    @property
    def dim(self) -> int:
        return self._dim

    def embed(self, text: str) -> list[float]:
        vec = [0.0] * self._dim
        for token in re.findall(r"[a-z0-9]+", text.lower()):
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            idx = int.from_bytes(digest[:4], "big") % self._dim
            sign = 1.0 if digest[4] % 2 == 0 else -1.0
            vec[idx] += sign
        return vec


class HttpEmbedding:
    """OpenAI-compatible /embeddings client. Dimension is read from the first
    response rather than hardcoded."""

    def __init__(self, base_url: str, model: str, api_key: str | None = None, request_timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.request_timeout = request_timeout
        self._dim: int | None = None

    @property
    def dim(self) -> int:
        if self._dim is None:
            raise DimensionMismatch("embedding dimension unknown before the first call")
        return self._dim

    def embed(self, text: str) -> list[float]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(
                f"{self.base_url}/embeddings",
                json={"model": self.model, "input": text},
                headers=headers,
                timeout=self.request_timeout,
            )
        except requests.RequestException as exc:
            raise BackendUnavailable(f"embedding request failed: {exc}") from exc
        if resp.status_code != 200:
            raise BackendUnavailable(f"HTTP {resp.status_code}: {resp.text[:500]}")
        try:
            values = [float(v) for v in resp.json()["data"][0]["embedding"]]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable(f"malformed embedding payload: {exc}") from exc
        if self._dim is None:
            self._dim = len(values)
        elif len(values) != self._dim:
            raise DimensionMismatch(f"provider returned {len(values)} values, expected {self._dim}")
        return values


# ---------------------------------------------------------------------------
# Gateway
# ---------------------------------------------------------------------------


class Gateway:
    """Single entry point for completions and embeddings.

    Shareable across concurrent pipelines: backends are stateless or
    internally locked (cassette). Every embedding returned by :meth:`embed`
    is L2-normalized so cosine similarity downstream reduces to a dot
    product.
    """

    def __init__(
        self,
        backends: dict[str, ChatBackend],
        embedder: EmbeddingProvider,
        cassette: Cassette | None = None,
        embed_mode: str = "live",  # "live" | "record" | "replay"
    ):
        if embed_mode not in ("live", "record", "replay"):
            raise ValueError(f"invalid embed_mode: {embed_mode}")
        if embed_mode in ("record", "replay") and cassette is None:
            raise ValueError(f"embed_mode={embed_mode} requires a cassette")
        self._backends = dict(backends)
        self._embedder = embedder
        self._cassette = cassette
        self._embed_mode = embed_mode

    def complete(self, request: ChatRequest) -> ChatResponse:
        backend = self._backends.get(request.backend_id)
        if backend is None:
            raise BackendUnavailable(f"no backend configured with id {request.backend_id!r}")
        return backend.complete(request)

    def embed(self, text: str) -> EmbeddingVector:
        if not text.strip():
            raise EmptyText("cannot embed empty text")
        if self._embed_mode == "replay":
            assert self._cassette is not None
            entry = self._cassette.consume(embed_fingerprint(text), "embed")
            raw = [float(v) for v in entry.response["values"]]
        else:
            raw = self._embedder.embed(text)
            if len(raw) != self._embedder.dim:
                raise DimensionMismatch(
                    f"provider returned {len(raw)} values, expected {self._embedder.dim}"
                )
            if self._embed_mode == "record":
                assert self._cassette is not None
                self._cassette.append(
                    CassetteEntry(
                        fingerprint=embed_fingerprint(text),
                        kind="embed",
                        request_summary=f"embed: {text[:100]}",
                        response={"values": raw},
                    )
                )
        norm = math.sqrt(sum(v * v for v in raw))
        if norm == 0.0:
            raise EmptyText("text embedded to an all-zero vector")
        unit = tuple(v / norm for v in raw)
        return EmbeddingVector(values=unit, dim=len(unit))
