"""Main-chat model interface and offline doubles for replay."""
from __future__ import annotations

import random
import zlib
from typing import Callable, Protocol, Sequence

from ..backend import BackendError, Completion


class ChatModel(Protocol):
    def chat(self, messages: Sequence[tuple[str, str]]) -> Completion: ...


class MockChatModel:
    """Deterministic replies of a fixed token length.

    The reply depends only on the latest user message. Without a vocabulary
    every reply uses words unique to that message; with one, words are drawn
    from it (seeded by a hash of the message) so replies share terms.
    """

    def __init__(self, reply_tokens: int = 150, vocabulary: Sequence[str] | None = None, seed: int = 0):
        self.reply_tokens = reply_tokens
        self.vocabulary = list(vocabulary) if vocabulary else None
        self.seed = seed

    def chat(self, messages: Sequence[tuple[str, str]]) -> Completion:
        user = messages[-1][1]
        key = zlib.crc32(user.encode("utf-8")) ^ self.seed
        if self.vocabulary is None:
            words = [f"r{key:08x}_{i}" for i in range(self.reply_tokens)]
        else:
            rng = random.Random(key)
            words = [rng.choice(self.vocabulary) for _ in range(self.reply_tokens)]
        return Completion(" ".join(words))


class FunctionChatModel:
    def __init__(self, fn: Callable[[Sequence[tuple[str, str]]], str]):
        self.fn = fn

    def chat(self, messages: Sequence[tuple[str, str]]) -> Completion:
        return Completion(self.fn(messages))


class FailingChatModel:
    def __init__(self, fail_at: int = 1):
        self.fail_at = fail_at
        self.calls = 0

    def chat(self, messages: Sequence[tuple[str, str]]) -> Completion:
        self.calls += 1
        if self.calls >= self.fail_at:
            raise BackendError("chat model unavailable")
        return Completion("ok")
