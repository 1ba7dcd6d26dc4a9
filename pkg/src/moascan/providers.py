"""Provider-neutral chat completion with record/replay.

Every call goes through :class:`ChatClient`, which enforces the context
budget, dispatches on ``ModelSpec.provider_kind`` and optionally records the
exchange into a :class:`Cassette`. Replaying a cassette makes a pipeline run
fully deterministic and offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol, Sequence

import httpx
import yaml

from .errors import (
    BudgetExceededError,
    CassetteMissError,
    ConfigError,
    DigestCollisionError,
    MissingCredentialError,
    ProviderError,
    ProviderUnavailableError,
    RateLimitedError,
)
from .ingest import estimate_tokens

logger = logging.getLogger(__name__)

PROVIDER_KINDS = ("remote-openai-compatible", "remote-gemini-compatible", "replay", "scripted")
ROLES = ("system", "user", "assistant")
FINISH_REASONS = ("stop", "length", "error")
CASSETTE_FORMAT = "moascan-cassette"
CASSETTE_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    provider_kind: str
    model_name: str
    context_window_tokens: int
    max_output_tokens: int
    base_url: str | None = None
    api_key_env: str | None = None

    def __post_init__(self):
        if self.provider_kind not in PROVIDER_KINDS:
            raise ConfigError(f"unknown provider kind {self.provider_kind!r}")
        if self.context_window_tokens <= 0 or self.max_output_tokens <= 0:
            raise ConfigError("token limits must be positive")
        if self.max_output_tokens >= self.context_window_tokens:
            raise ConfigError(f"{self.model_name}: max_output_tokens must be below the context window")

    def as_dict(self) -> dict:
        d = {
            "provider": self.provider_kind,
            "model": self.model_name,
            "context_window_tokens": self.context_window_tokens,
            "max_output_tokens": self.max_output_tokens,
        }
        if self.base_url:
            d["base_url"] = self.base_url
        if self.api_key_env:
            d["api_key_env"] = self.api_key_env
        return d


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"invalid role {self.role!r}")
        if self.role in ("system", "user") and not self.content:
            raise ValueError(f"{self.role} message must not be empty")


@dataclass(frozen=True)
class ChatRequest:
    model: ModelSpec
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_tokens: int = 1024

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("a request needs at least one message")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")

    @property
    def prompt_text(self) -> str:
        return "\n".join(m.content for m in self.messages)

    def canonical(self) -> dict:
        return canonical_request(self)

    @property
    def digest(self) -> str:
        return request_digest(self)


@dataclass(frozen=True)
class ChatResponse:
    content: str
    finish_reason: str = "stop"
    input_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self):
        if self.finish_reason not in FINISH_REASONS:
            raise ValueError(f"invalid finish_reason {self.finish_reason!r}")

    def as_dict(self) -> dict:
        return {
            "content": self.content,
            "finish_reason": self.finish_reason,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ChatResponse":
        return cls(
            content=str(d["content"]),
            finish_reason=str(d.get("finish_reason", "stop")),
            input_tokens=int(d.get("input_tokens", 0)),
            output_tokens=int(d.get("output_tokens", 0)),
        )


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_request(request: ChatRequest | Mapping) -> dict:
    """Logical content of a request: model name, messages, temperature, max_tokens.

    Accepts a ChatRequest or an already-deserialized mapping (``model`` may be
    a name or a ModelSpec-like mapping), so a request read back from JSON in any
    layout maps to the same canonical form.
    """
    if isinstance(request, ChatRequest):
        model = request.model.model_name
        messages = [(m.role, m.content) for m in request.messages]
        temperature, max_tokens = request.temperature, request.max_tokens
    else:
        model = request["model"]
        if isinstance(model, Mapping):
            model = model.get("model_name") or model.get("model")
        messages = [(m["role"], m["content"]) for m in request["messages"]]
        temperature = request.get("temperature", 0.0)
        max_tokens = request["max_tokens"]
    return {
        "model": str(model),
        "messages": [{"role": str(r), "content": str(c)} for r, c in messages],
        "temperature": float(temperature),
        "max_tokens": int(max_tokens),
    }


def request_digest(request: ChatRequest | Mapping) -> str:
    return hashlib.sha256(canonical_json(canonical_request(request)).encode("utf-8")).hexdigest()


def enforce_budget(request: ChatRequest) -> ChatRequest:
    """Reject requests whose estimated prompt plus output allowance exceeds the window."""
    estimated = sum(estimate_tokens(m.content) for m in request.messages) + request.max_tokens
    if estimated > request.model.context_window_tokens:
        raise BudgetExceededError(estimated, request.model.context_window_tokens)
    return request


class Cassette:
    """Map of request digest -> recorded response, stored as JSON lines."""

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, tuple[dict, ChatResponse]] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, digest: str) -> bool:
        return digest in self._entries

    def get(self, digest: str) -> ChatResponse | None:
        entry = self._entries.get(digest)
        return entry[1] if entry else None

    def digests(self) -> list[str]:
        return sorted(self._entries)

    def record(self, request: ChatRequest | Mapping, response: ChatResponse) -> "Cassette":
        canon = canonical_request(request)
        digest = hashlib.sha256(canonical_json(canon).encode("utf-8")).hexdigest()
        with self._lock:
            existing = self._entries.get(digest)
            if existing is not None:
                if existing[1] != response:
                    raise DigestCollisionError(digest)
                return self
            self._entries[digest] = (canon, response)
        return self

    def lines(self) -> list[str]:
        out = [canonical_json({"format": CASSETTE_FORMAT, "version": CASSETTE_VERSION})]
        for digest in sorted(self._entries):
            canon, response = self._entries[digest]
            out.append(canonical_json({"digest": digest, "request": canon, "response": response.as_dict()}))
        return out

    def content_digest(self) -> str:
        return hashlib.sha256("\n".join(self.lines()).encode("utf-8")).hexdigest()

    def save(self, path: str | os.PathLike | None = None) -> Path:
        target = Path(path) if path is not None else self.path
        if target is None:
            raise ValueError("no cassette path given")
        with self._lock:
            text = "\n".join(self.lines()) + "\n"
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")
        return target

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Cassette":
        path = Path(path)
        cassette = cls(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read cassette {path}: {exc}") from exc
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if "format" in row:
                if row.get("format") != CASSETTE_FORMAT or row.get("version") != CASSETTE_VERSION:
                    raise ConfigError(f"{path}: unsupported cassette header {row}")
                continue
            cassette.record(row["request"], ChatResponse.from_dict(row["response"]))
            if row.get("digest") and row["digest"] not in cassette:
                raise ConfigError(f"{path}:{lineno}: stored digest does not match the request")
        return cassette


def record(request: ChatRequest, response: ChatResponse, cassette: Cassette) -> Cassette:
    return cassette.record(request, response)


class Backend(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


class ReplayBackend:
    """Serves responses from a cassette; misses raise and are remembered."""

    def __init__(self, cassette: Cassette):
        self.cassette = cassette
        self.misses: list[str] = []
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> ChatResponse:
        digest = request_digest(request)
        response = self.cassette.get(digest)
        if response is None:
            with self._lock:
                self.misses.append(digest)
            raise CassetteMissError(digest)
        return response


@dataclass(frozen=True)
class ScriptRule:
    respond: str
    contains: tuple[str, ...] = ()
    model: str | None = None

    def matches(self, request: ChatRequest) -> bool:
        if self.model is not None and self.model != request.model.model_name:
            return False
        text = request.messages[-1].content
        return all(s in text for s in self.contains)


class ScriptedBackend:
    """Answers from a rule table (first match wins) or a callable."""

    def __init__(
        self,
        rules: Sequence[ScriptRule] = (),
        default: str | None = None,
        fn: Callable[[ChatRequest], str] | None = None,
    ):
        self.rules = tuple(rules)
        self.default = default
        self.fn = fn

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "ScriptedBackend":
        try:
            data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read rule table {path}: {exc}") from exc
        rules = []
        for r in data.get("rules") or []:
            contains = r.get("contains") or ()
            if isinstance(contains, str):
                contains = (contains,)
            rules.append(ScriptRule(respond=str(r["respond"]), contains=tuple(contains), model=r.get("model")))
        return cls(rules, data.get("default"))

    def complete(self, request: ChatRequest) -> ChatResponse:
        if self.fn is not None:
            content = self.fn(request)
        else:
            for rule in self.rules:
                if rule.matches(request):
                    content = rule.respond
                    break
            else:
                if self.default is None:
                    raise ProviderError(f"no scripted rule matched a request to {request.model.model_name}")
                content = self.default
        return ChatResponse(
            content=content,
            finish_reason="stop",
            input_tokens=sum(estimate_tokens(m.content) for m in request.messages),
            output_tokens=estimate_tokens(content),
        )


@dataclass
class RetryPolicy:
    """Exponential backoff with jitter: base 1 s, capped at 30 s, 5 attempts."""

    max_attempts: int = 5
    base_delay: float = 1.0
    max_delay: float = 30.0
    sleep: Callable[[float], None] = time.sleep
    rng: random.Random = field(default_factory=random.Random)

    def delay(self, attempt: int) -> float:
        ceiling = min(self.max_delay, self.base_delay * (2**attempt))
        return ceiling * (0.5 + 0.5 * self.rng.random())

    def run(self, fn: Callable[[], ChatResponse]) -> ChatResponse:
        last: Exception | None = None
        for attempt in range(self.max_attempts):
            try:
                return fn()
            except (RateLimitedError, ProviderUnavailableError) as exc:
                last = exc
                if attempt + 1 < self.max_attempts:
                    wait = self.delay(attempt)
                    logger.info("attempt %d failed (%s); retrying in %.1fs", attempt + 1, exc, wait)
                    self.sleep(wait)
        assert last is not None
        raise last


class _HttpBackend:
    def __init__(self, retry: RetryPolicy | None = None, client: httpx.Client | None = None, timeout: float = 300.0):
        self.retry = retry or RetryPolicy()
        self.client = client or httpx.Client(timeout=timeout)

    @staticmethod
    def _credential(spec: ModelSpec) -> str | None:
        if not spec.api_key_env:
            return None
        key = os.environ.get(spec.api_key_env)
        if not key:
            raise MissingCredentialError(f"environment variable {spec.api_key_env} is not set")
        return key

    def _post(self, url: str, payload: dict, headers: dict) -> dict:
        try:
            resp = self.client.post(url, json=payload, headers=headers)
        except httpx.HTTPError as exc:
            raise ProviderUnavailableError(f"{url}: {exc}") from exc
        if resp.status_code == 429:
            raise RateLimitedError(f"{url}: rate limited")
        if resp.status_code >= 500:
            raise ProviderUnavailableError(f"{url}: HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise ProviderError(f"{url}: HTTP {resp.status_code}: {resp.text[:500]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise ProviderError(f"{url}: response is not JSON") from exc

    def complete(self, request: ChatRequest) -> ChatResponse:
        if not request.model.base_url:
            raise ConfigError(f"model {request.model.model_name} has no base_url")
        return self.retry.run(lambda: self._exchange(request))

    def _exchange(self, request: ChatRequest) -> ChatResponse:
        raise NotImplementedError


class OpenAICompatibleBackend(_HttpBackend):
    """``POST {base_url}/chat/completions`` in the OpenAI wire format."""

    def _exchange(self, request: ChatRequest) -> ChatResponse:
        spec = request.model
        headers = {}
        key = self._credential(spec)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": spec.model_name,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        data = self._post(f"{spec.base_url.rstrip('/')}/chat/completions", payload, headers)
        try:
            choice = data["choices"][0]
            content = choice["message"].get("content") or ""
            reason = choice.get("finish_reason") or "stop"
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed completion payload: {exc}") from exc
        usage = data.get("usage") or {}
        return ChatResponse(
            content=content,
            finish_reason=reason if reason in FINISH_REASONS else "stop",
            input_tokens=int(usage.get("prompt_tokens", 0)),
            output_tokens=int(usage.get("completion_tokens", 0)),
        )


class GeminiCompatibleBackend(_HttpBackend):
    """``POST {base_url}/models/{model}:generateContent`` in the Gemini wire format."""

    def _exchange(self, request: ChatRequest) -> ChatResponse:
        spec = request.model
        headers = {}
        key = self._credential(spec)
        if key:
            headers["x-goog-api-key"] = key
        system = [m.content for m in request.messages if m.role == "system"]
        contents = [
            {"role": "model" if m.role == "assistant" else "user", "parts": [{"text": m.content}]}
            for m in request.messages
            if m.role != "system"
        ]
        payload: dict = {
            "contents": contents,
            "generationConfig": {"temperature": request.temperature, "maxOutputTokens": request.max_tokens},
        }
        if system:
            payload["systemInstruction"] = {"parts": [{"text": "\n\n".join(system)}]}
        url = f"{spec.base_url.rstrip('/')}/models/{spec.model_name}:generateContent"
        data = self._post(url, payload, headers)
        try:
            cand = data["candidates"][0]
            content = "".join(p.get("text", "") for p in cand["content"]["parts"])
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed generateContent payload: {exc}") from exc
        reason = {"STOP": "stop", "MAX_TOKENS": "length"}.get(cand.get("finishReason", "STOP"), "error")
        usage = data.get("usageMetadata") or {}
        return ChatResponse(
            content=content,
            finish_reason=reason,
            input_tokens=int(usage.get("promptTokenCount", 0)),
            output_tokens=int(usage.get("candidatesTokenCount", 0)),
        )


class ChatClient:
    """Entry point for completions.

    ``force_kind`` routes every request to one backend regardless of the
    model's configured kind (used to replay a cassette recorded from live or
    scripted models). With ``record_to`` set, every successful exchange is
    written to that cassette.
    """

    def __init__(
        self,
        backends: Mapping[str, Backend],
        force_kind: str | None = None,
        record_to: Cassette | None = None,
    ):
        self.backends = dict(backends)
        self.force_kind = force_kind
        self.record_to = record_to
        self._calls = 0
        self._lock = threading.Lock()

    @classmethod
    def replay(cls, cassette: Cassette) -> "ChatClient":
        return cls({"replay": ReplayBackend(cassette)}, force_kind="replay")

    @classmethod
    def scripted(cls, backend: ScriptedBackend, record_to: Cassette | None = None) -> "ChatClient":
        return cls({"scripted": backend}, force_kind="scripted", record_to=record_to)

    @classmethod
    def live(cls, record_to: Cassette | None = None, retry: RetryPolicy | None = None) -> "ChatClient":
        return cls(
            {
                "remote-openai-compatible": OpenAICompatibleBackend(retry),
                "remote-gemini-compatible": GeminiCompatibleBackend(retry),
            },
            record_to=record_to,
        )

    @property
    def calls(self) -> int:
        return self._calls

    @property
    def cassette_misses(self) -> list[str]:
        backend = self.backends.get("replay")
        return list(backend.misses) if isinstance(backend, ReplayBackend) else []

    def complete(self, request: ChatRequest) -> ChatResponse:
        enforce_budget(request)
        kind = self.force_kind or request.model.provider_kind
        backend = self.backends.get(kind)
        if backend is None:
            raise ConfigError(f"no backend configured for provider kind {kind!r}")
        with self._lock:
            self._calls += 1
        response = backend.complete(request)
        if self.record_to is not None:
            self.record_to.record(request, response)
        return response
