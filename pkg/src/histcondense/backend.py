"""Text-generation backend contract plus deterministic offline doubles."""
from __future__ import annotations

import json
import threading
import zlib
from dataclasses import dataclass
from typing import Any, Callable, Protocol, Sequence

from .errors import HistCondenseError


class BackendError(HistCondenseError):
    pass


@dataclass(frozen=True)
class Completion:
    text: str
    prompt_tokens: int | None = None
    completion_tokens: int | None = None


class TextBackend(Protocol):
    """Anything that turns a prompt into a completion. Must not touch session state."""

    def complete(self, prompt: str, params: Any = None) -> Completion: ...


def _words(prefix: str, n: int) -> str:
    return " ".join(f"{prefix}{i}" for i in range(n))


class FixedCondensedBackend:
    """Returns a condensed pair of fixed token sizes.

    Word content is derived from a hash of the prompt, so replies are
    deterministic regardless of call order across sessions.
    """

    def __init__(self, user_tokens: int = 20, assistant_tokens: int = 60, reasoning: str = "fixed"):
        self.user_tokens = user_tokens
        self.assistant_tokens = assistant_tokens
        self.reasoning = reasoning
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, prompt: str, params: Any = None) -> Completion:
        with self._lock:
            self.calls += 1
        n = f"{zlib.crc32(prompt.encode('utf-8')):08x}"
        body = {
            "HumanInput": _words(f"cu{n}_", self.user_tokens),
            "Assistant": _words(f"ca{n}_", self.assistant_tokens),
            "Reasoning": self.reasoning,
        }
        return Completion(json.dumps(body))


class FailingBackend:
    def __init__(self, message: str = "backend unavailable"):
        self.message = message
        self.calls = 0

    def complete(self, prompt: str, params: Any = None) -> Completion:
        self.calls += 1
        raise BackendError(self.message)


class ScriptedBackend:
    """Returns canned texts in order; raises BackendError once exhausted."""

    def __init__(self, texts: Sequence[str]):
        self._texts = list(texts)
        self.prompts: list[str] = []

    def complete(self, prompt: str, params: Any = None) -> Completion:
        self.prompts.append(prompt)
        if not self._texts:
            raise BackendError("script exhausted")
        return Completion(self._texts.pop(0))


class FunctionBackend:
    def __init__(self, fn: Callable[[str], str]):
        self.fn = fn

    def complete(self, prompt: str, params: Any = None) -> Completion:
        return Completion(self.fn(prompt))
