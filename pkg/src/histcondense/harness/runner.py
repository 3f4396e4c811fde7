"""Replay transcripts through a history strategy and record per-turn metrics."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

from ..backend import BackendError
from ..tokens import DEFAULT_TOKENIZER, Tokenizer
from .chat_models import ChatModel
from .strategies import Event, Strategy, make_history
from .transcripts import Scoring, Transcript

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TtftModel:
    """Time to first token as a linear function of prompt tokens.

    The default slope is 1.15 s over 1,782 tokens, rounded.
    """

    intercept_seconds: float = 0.0
    seconds_per_token: float = 0.00065

    def __post_init__(self) -> None:
        if self.seconds_per_token <= 0:
            raise ValueError("seconds_per_token must be positive")


def estimate_ttft(prompt_tokens: int, model: TtftModel = TtftModel()) -> float:
    if prompt_tokens < 0:
        raise ValueError("prompt_tokens must be >= 0")
    return model.intercept_seconds + model.seconds_per_token * prompt_tokens


def score_exact_match(final_assistant_text: str, reference: str) -> bool:
    """Case-folded, trimmed containment of the reference in the answer."""
    return reference.strip().casefold() in final_assistant_text.strip().casefold()


@dataclass
class TurnRecord:
    turn_index: int
    prompt_history_tokens: int
    prompt_tokens: int
    history_messages: int
    background_tokens_in: int = 0
    background_tokens_out: int = 0
    decider_verdict: dict[str, Any] | None = None
    condensation_events: list[str] = field(default_factory=list)
    assistant_text: str = ""
    estimated_ttft_seconds: float = 0.0

    @property
    def background_tokens(self) -> int:
        return self.background_tokens_in + self.background_tokens_out

    def token_key(self) -> tuple[int, int, int, float]:
        """The token-derived fields, for comparing runs regardless of text."""
        return (self.turn_index, self.prompt_history_tokens, self.prompt_tokens, self.estimated_ttft_seconds)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TurnRecord":
        return cls(**d)


@dataclass
class SessionRecord:
    transcript_id: str
    turns: list[TurnRecord]
    repeat: int = 0
    tags: list[str] = field(default_factory=list)
    # set when a chat error cut the session short; turns holds what completed
    error: str | None = None
    exact_match: bool | None = None
    withheld_at: list[int] = field(default_factory=list)
    integrated_count: int = 0

    @property
    def key(self) -> tuple[str, int]:
        return (self.transcript_id, self.repeat)

    @property
    def partial(self) -> bool:
        return self.error is not None

    @property
    def withheld(self) -> bool:
        return bool(self.withheld_at)

    @property
    def condensed(self) -> bool:
        return self.integrated_count > 0

    @property
    def history_tokens(self) -> int:
        return sum(t.prompt_history_tokens for t in self.turns)

    @property
    def background_tokens(self) -> int:
        return sum(t.background_tokens for t in self.turns)

    @property
    def total_tokens_with_background(self) -> int:
        return self.history_tokens + self.background_tokens

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SessionRecord":
        d = dict(d)
        d["turns"] = [TurnRecord.from_dict(t) for t in d["turns"]]
        return cls(**d)


@dataclass
class RunReport:
    strategy: dict[str, Any]
    sessions: list[SessionRecord] = field(default_factory=list)
    reduction_vs_baseline_percent: float | None = None

    @property
    def turn_records(self) -> list[TurnRecord]:
        return [t for s in self.sessions for t in s.turns]

    def aggregates(self) -> dict[str, Any]:
        turns = self.turn_records
        history = sum(t.prompt_history_tokens for t in turns)
        background_in = sum(t.background_tokens_in for t in turns)
        background_out = sum(t.background_tokens_out for t in turns)
        scored = [s.exact_match for s in self.sessions if s.exact_match is not None]
        return {
            "sessions": len(self.sessions),
            "turns": len(turns),
            "avg_history_tokens": history / len(turns) if turns else 0.0,
            "total_history_tokens": history,
            "total_background_tokens_in": background_in,
            "total_background_tokens_out": background_out,
            "total_tokens_with_background": history + background_in + background_out,
            "reduction_vs_baseline_percent": self.reduction_vs_baseline_percent,
            "exact_match_accuracy": sum(scored) / len(scored) if scored else None,
            "withheld_session_count": sum(1 for s in self.sessions if s.withheld),
            "condensed_session_count": sum(1 for s in self.sessions if s.condensed),
            "partial_session_count": sum(1 for s in self.sessions if s.partial),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunReport":
        return cls(
            strategy=d["strategy"],
            sessions=[SessionRecord.from_dict(s) for s in d["sessions"]],
            reduction_vs_baseline_percent=d.get("reduction_vs_baseline_percent"),
        )


def run_session(
    transcript: Transcript,
    strategy: Strategy,
    chat_model: ChatModel,
    condenser: Any = None,
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
    ttft_model: TtftModel = TtftModel(),
    *,
    repeat: int = 0,
    replay: bool = True,
) -> SessionRecord:
    """Play one transcript turn by turn.

    ``condenser`` is either an object with ``condense(window)`` or a text
    backend, in which case it is wrapped in the prompt matching the strategy.
    """
    history = make_history(strategy, condenser, tokenizer, replay=replay)
    records: list[TurnRecord] = []
    error = None
    for turn_index, user_text in enumerate(transcript.user_turns, start=1):
        start = history.begin(user_text)
        history_tokens = sum(tokenizer.count(text) for _, text in start.messages[:-1])
        prompt_tokens = history_tokens + tokenizer.count(user_text)
        record = TurnRecord(
            turn_index=turn_index,
            prompt_history_tokens=history_tokens,
            prompt_tokens=prompt_tokens,
            history_messages=start.history_messages,
            condensation_events=[e.value for e in start.events],
            estimated_ttft_seconds=estimate_ttft(prompt_tokens, ttft_model),
        )
        records.append(record)
        try:
            reply = chat_model.chat(start.messages).text
        except BackendError as exc:
            error = f"turn {turn_index}: {type(exc).__name__}: {exc}"
            logger.warning("session %s aborted at %s", transcript.id, error)
            records.pop()
            break
        record.assistant_text = reply
        end = history.complete(reply)
        record.condensation_events += [e.value for e in end.events]
        if end.verdict is not None:
            record.decider_verdict = end.verdict.as_dict()

    jobs = history.finish()
    by_turn = {r.turn_index: r for r in records}
    for job in jobs:
        r = by_turn.get(job.trigger_turn)
        if r is None:
            continue
        r.background_tokens_in += job.input_tokens
        r.background_tokens_out += job.output_tokens

    session = getattr(history, "session", None)
    out = SessionRecord(
        transcript_id=transcript.id,
        turns=records,
        repeat=repeat,
        tags=list(transcript.tags),
        error=error,
        withheld_at=list(session.decider_withheld_at) if session is not None else [],
        integrated_count=(session.next_generation_index - 1) if session is not None else 0,
    )
    if transcript.scoring is Scoring.EXACT_MATCH and transcript.reference_answer is not None:
        final = records[-1].assistant_text if records and error is None else ""
        out.exact_match = score_exact_match(final, transcript.reference_answer)
    return out


def run_strategy(
    transcripts: Sequence[Transcript],
    strategy: Strategy,
    chat_model: ChatModel,
    condenser_factory: Any = None,
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
    ttft_model: TtftModel = TtftModel(),
    *,
    repeats: int = 1,
    concurrency: int = 1,
    replay: bool = True,
) -> RunReport:
    """Run every transcript (``repeats`` times each) and collect a report.

    ``condenser_factory`` is called once per session so sessions never share
    condenser state; it may also be a plain condenser/backend object, which is
    then shared.
    """
    jobs = [(t, r) for t in transcripts for r in range(repeats)]

    def one(item: tuple[Transcript, int]) -> SessionRecord:
        transcript, repeat = item
        condenser = condenser_factory() if callable(condenser_factory) and not _is_condenser(condenser_factory) else condenser_factory
        return run_session(transcript, strategy, chat_model, condenser, tokenizer, ttft_model,
                           repeat=repeat, replay=replay)

    if concurrency > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            sessions = list(pool.map(one, jobs))
    else:
        sessions = [one(j) for j in jobs]
    return RunReport(strategy=strategy.to_dict(), sessions=sessions)


def _is_condenser(obj: Any) -> bool:
    return hasattr(obj, "condense") or hasattr(obj, "complete")
