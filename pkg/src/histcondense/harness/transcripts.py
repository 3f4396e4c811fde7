"""Canonical transcript schema (JSONL, one object per line)."""
from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from ..errors import HistCondenseError

logger = logging.getLogger(__name__)


class SchemaError(HistCondenseError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class Scoring(str, enum.Enum):
    NONE = "none"
    EXACT_MATCH = "exact_match"


@dataclass(frozen=True)
class Transcript:
    id: str
    user_turns: tuple[str, ...]
    reference_answer: str | None = None
    scoring: Scoring = Scoring.NONE
    tags: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not self.user_turns:
            raise ValueError(f"transcript {self.id!r} has no user turns")
        if self.scoring is Scoring.EXACT_MATCH and self.reference_answer is None:
            raise ValueError(f"transcript {self.id!r}: exact_match scoring needs reference_answer")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Transcript":
        if not isinstance(data, dict):
            raise ValueError("transcript must be a JSON object")
        for key in ("id", "user_turns"):
            if key not in data:
                raise ValueError(f"missing {key!r}")
        turns = data["user_turns"]
        if not isinstance(turns, list) or not all(isinstance(t, str) for t in turns):
            raise ValueError("user_turns must be a list of strings")
        ref = data.get("reference_answer")
        if ref is not None and not isinstance(ref, str):
            raise ValueError("reference_answer must be a string or null")
        tags = data.get("tags", [])
        if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
            raise ValueError("tags must be a list of strings")
        return cls(
            id=str(data["id"]),
            user_turns=tuple(turns),
            reference_answer=ref,
            scoring=Scoring(data.get("scoring", "none")),
            tags=tuple(tags),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "user_turns": list(self.user_turns),
            "reference_answer": self.reference_answer,
            "scoring": self.scoring.value,
            "tags": list(self.tags),
        }


def parse_transcripts(lines: Iterable[str], *, lenient: bool = False) -> list[Transcript]:
    out = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            out.append(Transcript.from_dict(json.loads(line)))
        except (ValueError, TypeError) as exc:
            if not lenient:
                raise SchemaError(lineno, str(exc)) from None
            logger.warning("skipping malformed transcript at line %d: %s", lineno, exc)
    return out


def load_transcripts(path: str | Path, *, lenient: bool = False) -> list[Transcript]:
    with open(path, encoding="utf-8") as fh:
        transcripts = parse_transcripts(fh, lenient=lenient)
    if not transcripts:
        logger.warning("no transcripts in %s", path)
    return transcripts


def dump_transcripts(transcripts: Iterable[Transcript], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in transcripts:
            fh.write(json.dumps(t.to_dict(), ensure_ascii=False) + "\n")
