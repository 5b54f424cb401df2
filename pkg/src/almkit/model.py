"""Language-model endpoint abstraction: live HTTP, scripted, and record/replay."""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import httpx

from .accounting import TokenLedger, WhitespaceTokenizer
from .errors import ContextLimit, NetworkError, RateLimited, ReplayMiss

DEFAULT_MODEL_ID = "gpt-3.5-turbo"
DEFAULT_CONTEXT_LIMIT = 4096
DEFAULT_MAX_OUTPUT_TOKENS = 512


@dataclass(frozen=True)
class ModelRequest:
    prompt: str
    model_id: str = DEFAULT_MODEL_ID
    temperature: float = 0.0
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS
    stop_sequences: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")


@dataclass
class ModelResponse:
    text: str
    input_tokens: int = 0
    output_tokens: int = 0
    latency_ms: float = 0.0


def digest(prompt: str, model_id: str, temperature: float) -> str:
    """Stable content address for a model call, used as the replay key."""
    payload = f"{model_id}\x00{temperature:.6g}\x00{prompt}"
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class ReplayRecord:
    digest: str
    model_id: str
    prompt: str
    response_text: str
    input_tokens: int
    output_tokens: int

    def to_dict(self) -> dict:
        return {
            "digest": self.digest,
            "model_id": self.model_id,
            "prompt": self.prompt,
            "response_text": self.response_text,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReplayRecord":
        return cls(d["digest"], d["model_id"], d["prompt"], d["response_text"],
                   d["input_tokens"], d["output_tokens"])


class ReplayStore:
    """Digest-keyed store of recorded model responses.

    Modes: ``replay`` answers every call from the store and treats unknown
    digests as errors; ``record`` forwards to the real backend and keeps the
    response; ``passthrough`` just forwards. Reads need no lock; writes are
    serialized.
    """

    def __init__(self, mode: str = "replay"):
        if mode not in ("record", "replay", "passthrough"):
            raise ValueError(f"unknown replay mode {mode!r}")
        self.mode = mode
        self.entries: dict[str, ReplayRecord] = {}
        self._lock = threading.Lock()

    def add(self, record: ReplayRecord) -> None:
        with self._lock:
            self.entries[record.digest] = record

    def lookup(self, key: str) -> ReplayRecord:
        try:
            return self.entries[key]
        except KeyError:
            raise ReplayMiss(f"no recorded response for digest {key[:12]}…") from None

    def save(self, path: str | Path) -> None:
        lines = [json.dumps(r.to_dict(), ensure_ascii=False, sort_keys=True)
                 for r in sorted(self.entries.values(), key=lambda r: r.digest)]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, mode: str = "replay") -> "ReplayStore":
        store = cls(mode=mode)
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                store.add(ReplayRecord.from_dict(json.loads(line)))
        return store


class ScriptedBackend:
    """Deterministic backend for tests: either a fixed response sequence or a
    ``prompt -> text`` callable. Sequence mode is lock-protected so exhaustion
    errors stay meaningful under concurrency."""

    def __init__(self, responses: list[str] | Callable[[str], str]):
        self._script = responses
        self._index = 0
        self._lock = threading.Lock()

    def complete(self, request: ModelRequest) -> ModelResponse:
        if callable(self._script):
            return ModelResponse(text=self._script(request.prompt))
        with self._lock:
            if self._index >= len(self._script):
                raise NetworkError("scripted backend ran out of responses")
            text = self._script[self._index]
            self._index += 1
        return ModelResponse(text=text)


class HttpBackend:
    """OpenAI-compatible chat-completions client. The whole prompt is sent as
    one user message; retries use bounded exponential backoff."""

    def __init__(self, endpoint: str | None = None, api_key: str | None = None,
                 timeout: float = 30.0, max_attempts: int = 3,
                 backoff_s: float = 0.5, transport: httpx.BaseTransport | None = None):
        self.endpoint = endpoint or os.environ.get("ALMKIT_ENDPOINT",
                                                   "https://api.openai.com/v1/chat/completions")
        self.api_key = api_key or os.environ.get("ALMKIT_API_KEY") or os.environ.get("OPENAI_API_KEY", "")
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff_s = backoff_s
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def complete(self, request: ModelRequest) -> ModelResponse:
        payload = {
            "model": request.model_id,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        if request.stop_sequences:
            payload["stop"] = list(request.stop_sequences)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        last_error: Exception | None = None
        rate_limited = False
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(self.backoff_s * 2 ** (attempt - 1))
            try:
                response = self._client.post(self.endpoint, json=payload, headers=headers)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code == 429:
                rate_limited = True
                last_error = NetworkError("rate limited")
                continue
            if response.status_code >= 500:
                last_error = NetworkError(f"server error {response.status_code}")
                continue
            if response.status_code >= 400:
                raise NetworkError(f"request failed with status {response.status_code}: {response.text}")
            body = response.json()
            usage = body.get("usage", {})
            return ModelResponse(
                text=body["choices"][0]["message"]["content"],
                input_tokens=usage.get("prompt_tokens", 0),
                output_tokens=usage.get("completion_tokens", 0),
            )
        if rate_limited:
            raise RateLimited(f"gave up after {self.max_attempts} attempts")
        raise NetworkError(f"gave up after {self.max_attempts} attempts: {last_error}")


class ModelClient:
    """Front door for model calls: applies the context guard, consults the
    replay store per its mode, fills in token counts from the local tokenizer
    when the backend reports none, and appends to the caller's ledger."""

    def __init__(self, backend=None, store: ReplayStore | None = None,
                 tokenizer=None, model_id: str = DEFAULT_MODEL_ID,
                 temperature: float = 0.0,
                 max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS,
                 context_limit: int = DEFAULT_CONTEXT_LIMIT):
        if backend is None and (store is None or store.mode != "replay"):
            raise ValueError("a backend is required unless the store is in replay mode")
        self.backend = backend
        self.store = store
        self.tokenizer = tokenizer or WhitespaceTokenizer()
        self.model_id = model_id
        self.temperature = temperature
        self.max_output_tokens = max_output_tokens
        self.context_limit = context_limit

    def complete(self, prompt: str, *, ledger: TokenLedger | None = None,
                 call_kind: str = "single",
                 breakdown: dict[str, int] | None = None,
                 stop_sequences: tuple[str, ...] = ()) -> ModelResponse:
        request = ModelRequest(
            prompt=prompt,
            model_id=self.model_id,
            temperature=self.temperature,
            max_output_tokens=self.max_output_tokens,
            stop_sequences=stop_sequences,
        )
        local_input = self.tokenizer.count(prompt)
        if local_input + self.max_output_tokens > self.context_limit:
            raise ContextLimit(
                f"prompt ({local_input} tokens) plus max output "
                f"({self.max_output_tokens}) exceeds the {self.context_limit}-token window"
            )

        key = digest(prompt, self.model_id, self.temperature)
        started = time.monotonic()
        if self.store is not None and self.store.mode == "replay":
            record = self.store.lookup(key)
            response = ModelResponse(
                text=record.response_text,
                input_tokens=record.input_tokens,
                output_tokens=record.output_tokens,
            )
        else:
            response = self.backend.complete(request)
            if response.input_tokens == 0:
                response.input_tokens = local_input
            if response.output_tokens == 0:
                response.output_tokens = self.tokenizer.count(response.text)
            if self.store is not None and self.store.mode == "record":
                self.store.add(ReplayRecord(
                    digest=key,
                    model_id=self.model_id,
                    prompt=prompt,
                    response_text=response.text,
                    input_tokens=response.input_tokens,
                    output_tokens=response.output_tokens,
                ))
        response.latency_ms = (time.monotonic() - started) * 1000.0

        if ledger is not None:
            ledger.add(call_kind, response.input_tokens, response.output_tokens, breakdown)
        return response
