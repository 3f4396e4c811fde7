"""Minimal client for OpenAI-compatible ``/v1/chat/completions`` endpoints."""
from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import httpx

from ._compat import loads_toml
from .backend import BackendError, Completion
from .tokens import DEFAULT_TOKENIZER, Tokenizer

logger = logging.getLogger(__name__)

API_KEY_ENV = "HISTCONDENSE_API_KEY"
BASE_URL_ENV = "HISTCONDENSE_BASE_URL"

_ROLES = ("system", "user", "assistant")


class ClientError(BackendError):
    pass


class AuthError(ClientError):
    pass


class RateLimited(ClientError):
    pass


class TransportError(ClientError):
    pass


class MalformedResponse(ClientError):
    pass


@dataclass(frozen=True)
class ProviderProfile:
    """Per-provider capabilities. Unsupported sampling fields are left out of the body."""

    name: str = "default"
    supports_frequency_penalty: bool = True
    max_tokens_field: str = "max_completion_tokens"

    @classmethod
    def load(cls, path: str | Path, name: str | None = None) -> "ProviderProfile":
        """Load a profile from JSON or TOML; a file may hold one profile or a table of them."""
        path = Path(path)
        raw = path.read_bytes()
        if path.suffix == ".toml":
            data = loads_toml(raw.decode("utf-8"))
        else:
            data = json.loads(raw)
        if name is not None:
            data = data[name]
            data.setdefault("name", name)
        return cls(**data)


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.01
    top_p: float = 1.0
    frequency_penalty: float | None = 1.0
    max_completion_tokens: int = 10000

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("ChatRequest needs at least one message")
        for role, _ in self.messages:
            if role not in _ROLES:
                raise ValueError(f"invalid role {role!r}")

    def to_body(self, profile: ProviderProfile | None = None) -> dict[str, Any]:
        profile = profile or ProviderProfile()
        body: dict[str, Any] = {
            "model": self.model_id,
            "messages": [{"role": r, "content": c} for r, c in self.messages],
            "temperature": self.temperature,
            "top_p": self.top_p,
            profile.max_tokens_field: self.max_completion_tokens,
        }
        if self.frequency_penalty is not None and profile.supports_frequency_penalty:
            body["frequency_penalty"] = self.frequency_penalty
        return body

    def serialize(self, profile: ProviderProfile | None = None) -> bytes:
        return json.dumps(self.to_body(profile), ensure_ascii=False, separators=(",", ":")).encode("utf-8")


@dataclass
class ClientConfig:
    base_url: str
    api_key: str = field(default="", repr=False)
    timeout: float = 120.0
    max_retries: int = 3
    backoff_base: float = 1.0
    profile: ProviderProfile = field(default_factory=ProviderProfile)

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    @classmethod
    def from_env(cls, **overrides: Any) -> "ClientConfig":
        base_url = overrides.pop("base_url", None) or os.environ.get(BASE_URL_ENV)
        if not base_url:
            raise ValueError(f"set {BASE_URL_ENV} or pass base_url")
        return cls(base_url=base_url, api_key=os.environ.get(API_KEY_ENV, ""), **overrides)

    @property
    def endpoint(self) -> str:
        base = self.base_url.rstrip("/")
        if base.endswith("/chat/completions"):
            return base
        if not base.endswith("/v1"):
            base += "/v1"
        return base + "/chat/completions"


_RETRYABLE = {429, 500, 502, 503, 504}


def chat_complete(
    request: ChatRequest,
    config: ClientConfig,
    *,
    http: httpx.Client | None = None,
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
    sleep: Callable[[float], None] = time.sleep,
) -> Completion:
    """Send one chat request, retrying 429/5xx/timeouts with exponential backoff."""
    body = request.serialize(config.profile)
    headers = {"Content-Type": "application/json"}
    if config.api_key:
        headers["Authorization"] = f"Bearer {config.api_key}"
    own = http is None
    http = http or httpx.Client(timeout=config.timeout)
    try:
        attempt = 0
        while True:
            try:
                resp = http.post(config.endpoint, content=body, headers=headers, timeout=config.timeout)
            except httpx.TimeoutException as exc:
                error: ClientError = TransportError(f"timeout: {exc}")
            except httpx.HTTPError as exc:
                error = TransportError(f"{type(exc).__name__}: {exc}")
            else:
                if resp.status_code in (401, 403):
                    raise AuthError(f"HTTP {resp.status_code} from {config.endpoint}")
                if resp.status_code == 429:
                    error = RateLimited("HTTP 429")
                elif resp.status_code in _RETRYABLE:
                    error = TransportError(f"HTTP {resp.status_code}")
                elif resp.status_code >= 400:
                    raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    return _parse_response(resp, request, tokenizer)
            if attempt >= config.max_retries:
                raise error
            delay = config.backoff_base * (2 ** attempt)
            logger.info("retrying chat request after %s (attempt %d, sleeping %.2fs)", error, attempt + 1, delay)
            sleep(delay)
            attempt += 1
    finally:
        if own:
            http.close()


def _parse_response(resp: httpx.Response, request: ChatRequest, tokenizer: Tokenizer) -> Completion:
    try:
        data = resp.json()
        text = data["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"unexpected completion payload: {exc}") from None
    if not isinstance(text, str):
        raise MalformedResponse("message content is not a string")
    usage = data.get("usage") or {}
    prompt_tokens = usage.get("prompt_tokens")
    completion_tokens = usage.get("completion_tokens")
    if prompt_tokens is None:
        prompt_tokens = sum(tokenizer.count(c) for _, c in request.messages)
    if completion_tokens is None:
        completion_tokens = tokenizer.count(text)
    return Completion(text, int(prompt_tokens), int(completion_tokens))


class ChatClient:
    """Shared client holding one connection pool; also usable as a text backend."""

    def __init__(self, config: ClientConfig, model_id: str, *, tokenizer: Tokenizer = DEFAULT_TOKENIZER,
                 temperature: float = 0.01, top_p: float = 1.0, frequency_penalty: float | None = 1.0,
                 max_completion_tokens: int = 10000, sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self.model_id = model_id
        self.tokenizer = tokenizer
        self.temperature = temperature
        self.top_p = top_p
        self.frequency_penalty = frequency_penalty
        self.max_completion_tokens = max_completion_tokens
        self._sleep = sleep
        self._http = httpx.Client(timeout=config.timeout, limits=httpx.Limits(max_connections=16))

    def chat(self, messages: Sequence[tuple[str, str]]) -> Completion:
        request = ChatRequest(
            model_id=self.model_id,
            messages=tuple(messages),
            temperature=self.temperature,
            top_p=self.top_p,
            frequency_penalty=self.frequency_penalty,
            max_completion_tokens=self.max_completion_tokens,
        )
        return chat_complete(request, self.config, http=self._http, tokenizer=self.tokenizer, sleep=self._sleep)

    def complete(self, prompt: str, params: Any = None) -> Completion:
        """Text-backend entry point; ``params`` may carry sampling overrides."""
        request = ChatRequest(
            model_id=getattr(params, "model_id", None) or self.model_id,
            messages=(("user", prompt),),
            temperature=getattr(params, "temperature", self.temperature),
            top_p=getattr(params, "top_p", self.top_p),
            frequency_penalty=getattr(params, "frequency_penalty", self.frequency_penalty),
            max_completion_tokens=getattr(params, "max_completion_tokens", None)
            or getattr(params, "max_tokens", None)
            or self.max_completion_tokens,
        )
        return chat_complete(request, self.config, http=self._http, tokenizer=self.tokenizer, sleep=self._sleep)

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "ChatClient":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()
