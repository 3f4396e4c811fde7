"""Rule-based gate deciding whether a triggered window may be condensed.

Each turn is reduced to a set of normalized content words. For assistant turn
``i`` the *novel* terms are its words minus every word the user has said up to
and including turn ``i``. Overlap measures how much of that novel assistant
vocabulary recurs across turns of the window. When overlap exceeds ``gamma``
and the user has supplied more than ``tau`` tokens, condensing would risk
dropping repeatedly referenced content, so the window is withheld.
"""
from __future__ import annotations

import enum
import re
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

from .errors import HistCondenseError
from .session import HistoryEntry, WindowConfig
from .stemmer import stem
from .tokens import DEFAULT_TOKENIZER, Tokenizer

_SEPARATORS = re.compile(r"[^0-9a-z]+")


class WindowTooSmall(HistCondenseError):
    pass


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    """Read a stopword list, one word per line (UTF-8). Defaults to the bundled list."""
    if path is None:
        text = resources.files("histcondense.data").joinpath("stopwords.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return frozenset(line.strip().lower() for line in text.splitlines() if line.strip())


@lru_cache(maxsize=1)
def default_stopwords() -> frozenset[str]:
    return load_stopwords()


def normalize(text: str, stopwords: frozenset[str] | None = None) -> frozenset[str]:
    """lowercase -> non-alphanumerics become separators -> drop stopwords -> stem."""
    stop = default_stopwords() if stopwords is None else stopwords
    words = _SEPARATORS.split(text.lower())
    out = set()
    for word in words:
        if not word or word in stop:
            continue
        stemmed = stem(word)
        if stemmed and stemmed not in stop:
            out.add(stemmed)
    return frozenset(out)


def _sides(entry) -> tuple[str, str]:
    if isinstance(entry, tuple):
        return entry
    return entry.user_text, entry.assistant_text


def assistant_novel_terms(
    window: Sequence[HistoryEntry | tuple[str, str]],
    i: int,
    stopwords: frozenset[str] | None = None,
) -> frozenset[str]:
    """Normalized words of assistant turn ``i`` (1-based) not used by the user up to turn ``i``."""
    if not 1 <= i <= len(window):
        raise IndexError(f"turn position {i} outside window of {len(window)}")
    user_seen: set[str] = set()
    for entry in window[:i]:
        user_seen |= normalize(_sides(entry)[0], stopwords)
    return normalize(_sides(window[i - 1])[1], stopwords) - user_seen


def novel_sets(window, stopwords=None) -> list[frozenset[str]]:
    user_seen: set[str] = set()
    sets = []
    for entry in window:
        user_text, assistant_text = _sides(entry)
        user_seen |= normalize(user_text, stopwords)
        sets.append(normalize(assistant_text, stopwords) - user_seen)
    return sets


def shared_mass_ratio(sets: Iterable[frozenset[str]]) -> float:
    counts = Counter(word for s in sets for word in s)
    if not counts:
        return 0.0
    shared = sum(1 for c in counts.values() if c >= 2)
    return shared / len(counts)


def mean_pairwise_jaccard(sets: Sequence[frozenset[str]]) -> float:
    scores = []
    for a, b in combinations(sets, 2):
        union = a | b
        scores.append(len(a & b) / len(union) if union else 0.0)
    return sum(scores) / len(scores) if scores else 0.0


def window_overlap(window, mode: str = "global", stopwords: frozenset[str] | None = None) -> float:
    if len(window) < 2:
        raise WindowTooSmall(f"overlap needs at least 2 turns, got {len(window)}")
    sets = novel_sets(window, stopwords)
    if mode == "global":
        return shared_mass_ratio(sets)
    if mode == "pairwise":
        return mean_pairwise_jaccard(sets)
    raise ValueError(f"unknown overlap mode {mode!r}")


def user_token_total(window, tokenizer: Tokenizer = DEFAULT_TOKENIZER) -> int:
    return sum(tokenizer.count(_sides(entry)[0]) for entry in window)


class Decision(str, enum.Enum):
    CONDENSE = "condense"
    WITHHOLD = "withhold"


@dataclass(frozen=True)
class DeciderVerdict:
    decision: Decision
    overlap: float
    user_tokens: int
    gamma: float
    tau: int

    @property
    def withheld(self) -> bool:
        return self.decision is Decision.WITHHOLD

    def as_dict(self) -> dict:
        return {
            "decision": self.decision.value,
            "overlap": self.overlap,
            "user_tokens": self.user_tokens,
            "gamma": self.gamma,
            "tau": self.tau,
        }


def decide(
    window,
    config: WindowConfig,
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
    *,
    history_user_tokens: int | None = None,
    stopwords: frozenset[str] | None = None,
) -> DeciderVerdict:
    """Withhold iff overlap > gamma and user tokens > tau.

    ``history_user_tokens`` replaces the window sum when ``config.tau_scope``
    is ``"history"``; callers pass the total over every user turn so far.
    """
    overlap = window_overlap(window, config.overlap_mode, stopwords)
    if config.tau_scope == "history" and history_user_tokens is not None:
        user_tokens = history_user_tokens
    else:
        user_tokens = user_token_total(window, tokenizer)
    withhold = config.decider_enabled and overlap > config.gamma and user_tokens > config.tau
    return DeciderVerdict(
        decision=Decision.WITHHOLD if withhold else Decision.CONDENSE,
        overlap=overlap,
        user_tokens=user_tokens,
        gamma=config.gamma,
        tau=config.tau,
    )
