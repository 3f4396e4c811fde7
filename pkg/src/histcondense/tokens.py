"""Token counting used for history budgets and the decider's user-token gate."""
from __future__ import annotations

import re
from typing import Protocol, runtime_checkable

_RUN = re.compile(r"\S+")


@runtime_checkable
class Tokenizer(Protocol):
    def count(self, text: str) -> int: ...


def default_token_count(text: str) -> int:
    """Count maximal runs of non-whitespace characters."""
    return sum(1 for _ in _RUN.finditer(text))


def truncate_tokens(text: str, n: int) -> str:
    """Keep the first ``n`` whitespace-run tokens of ``text``, joined by single spaces."""
    if n <= 0:
        return ""
    return " ".join(m.group(0) for _, m in zip(range(n), _RUN.finditer(text)))


class WhitespaceTokenizer:
    def count(self, text: str) -> int:
        return default_token_count(text)

    def __repr__(self) -> str:
        return "WhitespaceTokenizer()"


DEFAULT_TOKENIZER = WhitespaceTokenizer()
