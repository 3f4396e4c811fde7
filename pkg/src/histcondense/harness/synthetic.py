"""Synthetic transcripts with exact token sizes for analytic checks."""
from __future__ import annotations

import random

from .transcripts import Transcript


def synthetic_transcript(transcript_id: str = "synthetic", n_turns: int = 10, user_tokens: int = 50) -> Transcript:
    turns = tuple(" ".join(f"u{t}w{i}" for i in range(user_tokens)) for t in range(1, n_turns + 1))
    return Transcript(id=transcript_id, user_turns=turns, tags=("synthetic",))


def vocabulary_transcripts(
    n: int, *, n_turns: int = 10, user_tokens: tuple[int, int] = (50, 400), vocabulary_size: int = 40, seed: int = 0
) -> list[Transcript]:
    """Transcripts whose user turns draw words from a small shared vocabulary.

    Lengths vary per transcript so decider thresholds split the set.
    """
    rng = random.Random(seed)
    vocab = [f"term{i}" for i in range(vocabulary_size)]
    out = []
    for k in range(n):
        lo, hi = user_tokens
        size = rng.randint(lo, hi)
        turns = tuple(" ".join(rng.choice(vocab) for _ in range(size)) for _ in range(n_turns))
        out.append(Transcript(id=f"vocab-{k}", user_turns=turns, tags=("synthetic", "vocab")))
    return out
