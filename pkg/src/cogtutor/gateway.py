"""Uniform access to a chat-completion provider and an embedding provider.

Three modes, selected by ``COGTUTOR_MODE``:

* ``live``   — calls the configured HTTP endpoints.
* ``record`` — calls live and appends every response to the fixture files.
* ``replay`` — serves responses from the fixture files only; never touches
  the network. Requests are keyed by a canonical hash, so a replayed run is
  byte-deterministic and a drifted prompt surfaces as ``FixtureMiss``
  instead of a silently different conversation.

Fixture files are one JSON document per provider kind
(``chat_fixtures.json`` / ``embed_fixtures.json``): a map from hash to
response payload, indented so entries can be hand-authored in tests.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import threading
import time
from dataclasses import dataclass, field

import requests

from .errors import (
    EmbeddingDimensionMismatch,
    EmptyInput,
    FixtureMiss,
    ProviderUnreachable,
)
from .storage import atomic_write_json, read_json

log = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.3
RETRY_ATTEMPTS = 3
RETRY_BACKOFF_S = 0.5

_WS = re.compile(r"\s+")


def _norm_ws(text: str) -> str:
    return _WS.sub(" ", text).strip()


@dataclass(frozen=True)
class ChatRequest:
    """One chat completion call: system + few-shot examples + user turn."""

    system_prompt: str
    user_prompt: str
    few_shot_examples: tuple[tuple[str, str], ...] = ()
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = 512

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 1]")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        # accept lists from callers/JSON but store hashable tuples
        object.__setattr__(
            self,
            "few_shot_examples",
            tuple((str(a), str(b)) for a, b in self.few_shot_examples),
        )

    def to_dict(self) -> dict:
        return {
            "system_prompt": self.system_prompt,
            "user_prompt": self.user_prompt,
            "few_shot_examples": [list(pair) for pair in self.few_shot_examples],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ChatRequest":
        return cls(
            system_prompt=payload["system_prompt"],
            user_prompt=payload["user_prompt"],
            few_shot_examples=tuple(
                (a, b) for a, b in payload.get("few_shot_examples", [])
            ),
            temperature=payload.get("temperature", DEFAULT_TEMPERATURE),
            max_tokens=payload.get("max_tokens", 512),
        )


@dataclass(frozen=True)
class ChatResponse:
    text: str
    provider_id: str
    cached: bool = False


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    dim: int = field(default=0)

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "dim", len(self.values))
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("embedding contains non-finite values")

    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.values))


def canonical_request_hash(request: ChatRequest) -> str:
    """Stable, platform-independent key for a chat request.

    Prompt text is whitespace-normalized before hashing so cosmetic edits
    (trailing spaces, reflowed lines) do not invalidate fixtures; any
    semantic field, temperature included, changes the hash.
    """
    payload = {
        "system_prompt": _norm_ws(request.system_prompt),
        "user_prompt": _norm_ws(request.user_prompt),
        "few_shot_examples": [
            [_norm_ws(a), _norm_ws(b)] for a, b in request.few_shot_examples
        ],
        "temperature": repr(float(request.temperature)),
        "max_tokens": request.max_tokens,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def embedding_text_hash(text: str) -> str:
    return hashlib.sha256(_norm_ws(text).encode("utf-8")).hexdigest()


class TransportError(Exception):
    """Transient transport failure; gateway retries these."""


class FixtureStore:
    """One JSON fixture document; read-only once loaded, serialized appends."""

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()
        self._entries: dict[str, dict] = {}
        if os.path.exists(path):
            self._entries = dict(read_json(path))

    def get(self, key: str) -> dict | None:
        return self._entries.get(key)

    def put(self, key: str, payload: dict) -> None:
        with self._lock:
            self._entries[key] = payload
            atomic_write_json(self.path, self._entries, indent=2)

    def __len__(self) -> int:
        return len(self._entries)


class HttpChatTransport:
    """Minimal OpenAI-style chat endpoint client."""

    def __init__(self, endpoint: str, api_key: str = "", model: str = "default", timeout_s: float = 60.0):
        self.endpoint = endpoint
        self.api_key = api_key
        self.model = model
        self.timeout_s = timeout_s

    def send(self, request: ChatRequest) -> str:
        messages = [{"role": "system", "content": request.system_prompt}]
        for example_in, example_out in request.few_shot_examples:
            messages.append({"role": "user", "content": example_in})
            messages.append({"role": "assistant", "content": example_out})
        messages.append({"role": "user", "content": request.user_prompt})
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = requests.post(
                self.endpoint,
                json={
                    "model": self.model,
                    "messages": messages,
                    "temperature": request.temperature,
                    "max_tokens": request.max_tokens,
                },
                headers=headers,
                timeout=self.timeout_s,
            )
            response.raise_for_status()
            body = response.json()
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed provider response: {body!r}") from exc


class HttpEmbeddingTransport:
    def __init__(self, endpoint: str, api_key: str = "", model: str = "default", timeout_s: float = 60.0):
        self.endpoint = endpoint
        self.api_key = api_key
        self.model = model
        self.timeout_s = timeout_s

    def send(self, texts: list[str]) -> list[list[float]]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = requests.post(
                self.endpoint,
                json={"model": self.model, "input": texts},
                headers=headers,
                timeout=self.timeout_s,
            )
            response.raise_for_status()
            body = response.json()
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        try:
            return [item["embedding"] for item in body["data"]]
        except (KeyError, TypeError) as exc:
            raise TransportError(f"malformed embedding response: {body!r}") from exc


class LLMGateway:
    """Mode-aware front door for completions and embeddings.

    ``embed_dim`` is declared at construction and every embedding response
    is validated against it, so two providers can never silently mix
    vectors inside one skill registry.
    """

    def __init__(
        self,
        mode: str = "replay",
        fixture_dir: str = ".",
        chat_transport=None,
        embed_transport=None,
        embed_dim: int | None = None,
        provider_id: str = "provider",
        sleep=time.sleep,
    ):
        if mode not in ("live", "record", "replay"):
            raise ValueError(f"unknown gateway mode {mode!r}")
        self.mode = mode
        self.provider_id = provider_id
        self.embed_dim = embed_dim
        self._chat_transport = chat_transport
        self._embed_transport = embed_transport
        self._sleep = sleep
        self.chat_fixtures = FixtureStore(os.path.join(fixture_dir, "chat_fixtures.json"))
        self.embed_fixtures = FixtureStore(os.path.join(fixture_dir, "embed_fixtures.json"))

    @classmethod
    def from_env(cls, env=os.environ) -> "LLMGateway":
        mode = env.get("COGTUTOR_MODE", "replay")
        fixture_dir = env.get("COGTUTOR_FIXTURE_DIR", ".")
        chat_transport = None
        embed_transport = None
        if mode in ("live", "record"):
            chat_transport = HttpChatTransport(
                env["COGTUTOR_LLM_ENDPOINT"], env.get("COGTUTOR_LLM_KEY", "")
            )
            if env.get("COGTUTOR_EMBED_ENDPOINT"):
                embed_transport = HttpEmbeddingTransport(
                    env["COGTUTOR_EMBED_ENDPOINT"], env.get("COGTUTOR_LLM_KEY", "")
                )
        return cls(
            mode=mode,
            fixture_dir=fixture_dir,
            chat_transport=chat_transport,
            embed_transport=embed_transport,
        )

    # -- completions --------------------------------------------------

    def complete(self, request: ChatRequest) -> ChatResponse:
        key = canonical_request_hash(request)
        if self.mode == "replay":
            entry = self.chat_fixtures.get(key)
            if entry is None:
                raise FixtureMiss("chat", key)
            return ChatResponse(text=entry["text"], provider_id="replay", cached=True)

        text = self._call_with_retries(lambda: self._checked(self._chat_transport.send(request)))
        if self.mode == "record":
            self.chat_fixtures.put(key, {"text": text, "prompt_preview": _norm_ws(request.user_prompt)[:120]})
        return ChatResponse(text=text, provider_id=self.provider_id, cached=False)

    @staticmethod
    def _checked(text: str) -> str:
        if not text or not text.strip():
            raise TransportError("provider returned empty text")
        return text

    # -- embeddings ----------------------------------------------------

    def embed(self, texts: list[str]) -> list[EmbeddingVector]:
        if not texts:
            raise EmptyInput("embed() requires at least one text")
        if self.mode == "replay":
            return [self._fixture_vector(text) for text in texts]

        # Order-preserving: look up what record mode already has, fetch the
        # rest in one call, and stitch results back by position.
        vectors: list[EmbeddingVector | None] = [None] * len(texts)
        missing: list[int] = []
        for i, text in enumerate(texts):
            entry = self.embed_fixtures.get(embedding_text_hash(text)) if self.mode == "record" else None
            if entry is not None:
                vectors[i] = self._validated(entry["values"])
            else:
                missing.append(i)
        if missing:
            fetched = self._call_with_retries(
                lambda: self._embed_transport.send([texts[i] for i in missing])
            )
            if len(fetched) != len(missing):
                raise ProviderUnreachable("embedding provider returned wrong count")
            for i, values in zip(missing, fetched):
                vectors[i] = self._validated(values)
                if self.mode == "record":
                    self.embed_fixtures.put(
                        embedding_text_hash(texts[i]),
                        {"values": list(vectors[i].values), "text_preview": _norm_ws(texts[i])[:120]},
                    )
        return vectors  # type: ignore[return-value]

    def _fixture_vector(self, text: str) -> EmbeddingVector:
        key = embedding_text_hash(text)
        entry = self.embed_fixtures.get(key)
        if entry is None:
            raise FixtureMiss("embed", key)
        return self._validated(entry["values"])

    def _validated(self, values) -> EmbeddingVector:
        vector = EmbeddingVector(tuple(values))
        if self.embed_dim is None:
            self.embed_dim = vector.dim
        elif vector.dim != self.embed_dim:
            raise EmbeddingDimensionMismatch(
                f"provider returned dim {vector.dim}, declared {self.embed_dim}"
            )
        return vector

    # -- retries -------------------------------------------------------

    def _call_with_retries(self, call):
        delay = RETRY_BACKOFF_S
        for attempt in range(1, RETRY_ATTEMPTS + 1):
            try:
                return call()
            except TransportError as exc:
                log.warning("provider call failed (attempt %d/%d): %s", attempt, RETRY_ATTEMPTS, exc)
                if attempt == RETRY_ATTEMPTS:
                    raise ProviderUnreachable(str(exc)) from exc
                self._sleep(delay)
                delay *= 2
        raise AssertionError("unreachable")
