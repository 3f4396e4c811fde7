"""History strategies compared by the replay harness.

Every strategy exposes the same two-step turn protocol: ``begin(user_text)``
returns the prompt messages for this turn, ``complete(reply)`` records the
assistant answer. ``finish()`` settles any background work so its token cost
can be accounted for.
"""
from __future__ import annotations

import enum
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

from ..condenser import CondenseOutcome, Condenser, CondenserParams, ExemplarSet, ParseFailedAfterRetries
from ..decider import DeciderVerdict, decide
from ..session import (
    ExchangePair,
    JobStatus,
    Role,
    SessionState,
    Turn,
    WindowConfig,
    begin_user_turn,
    build_prompt_history,
    complete_assistant_reply,
    job_due,
    mark_job_failed,
    mark_job_ready,
    record_withheld,
    start_job,
)
from ..tokens import DEFAULT_TOKENIZER, Tokenizer


class StrategyKind(str, enum.Enum):
    MT_BASELINE = "baseline"
    MT_OSC = "mtosc"
    FIFO = "fifo"
    MT_OSC_SUMMARIZER = "summ"


class Event(str, enum.Enum):
    TRIGGERED = "triggered"
    INTEGRATED = "integrated"
    WITHHELD = "withheld"
    FAILED = "failed"


@dataclass
class Strategy:
    kind: StrategyKind = StrategyKind.MT_OSC
    window_config: WindowConfig = field(default_factory=WindowConfig)
    fifo_limit: int = 4

    def __post_init__(self) -> None:
        self.kind = StrategyKind(self.kind)
        if self.fifo_limit < 1:
            raise ValueError("fifo_limit must be >= 1")

    @property
    def condenses(self) -> bool:
        return self.kind in (StrategyKind.MT_OSC, StrategyKind.MT_OSC_SUMMARIZER)

    def with_window(self, **changes: Any) -> "Strategy":
        return replace(self, window_config=replace(self.window_config, **changes))

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind.value}
        if self.condenses:
            d["window_config"] = dict(vars(self.window_config))
        if self.kind is StrategyKind.FIFO:
            d["fifo_limit"] = self.fifo_limit
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Strategy":
        return cls(
            kind=StrategyKind(data["kind"]),
            window_config=WindowConfig(**data.get("window_config", {})),
            fifo_limit=data.get("fifo_limit", 4),
        )


@dataclass
class TurnStart:
    messages: list[tuple[str, str]]
    history_messages: int
    events: list[Event] = field(default_factory=list)


@dataclass
class TurnEnd:
    events: list[Event] = field(default_factory=list)
    verdict: DeciderVerdict | None = None


class RawHistory:
    """All prior pairs, or only the latest ``limit`` pairs when a limit is set."""

    def __init__(self, limit: int | None = None, tokenizer: Tokenizer = DEFAULT_TOKENIZER):
        self.limit = limit
        self.tokenizer = tokenizer
        self.pairs: list[ExchangePair] = []
        self._open: str | None = None
        self._turns = 0

    def begin(self, user_text: str) -> TurnStart:
        self._open = user_text
        messages: list[tuple[str, str]] = []
        for p in self.pairs:
            messages += [("user", p.user_text), ("assistant", p.assistant_text)]
        return TurnStart(messages + [("user", user_text)], len(messages))

    def complete(self, reply: str) -> TurnEnd:
        assert self._open is not None
        self._turns += 1
        self.pairs.append(
            ExchangePair(
                Turn.make(Role.USER, self._open, self.tokenizer),
                Turn.make(Role.ASSISTANT, reply, self.tokenizer),
                self._turns,
            )
        )
        self._open = None
        if self.limit is not None and len(self.pairs) > self.limit:
            del self.pairs[: len(self.pairs) - self.limit]
        return TurnEnd()

    def finish(self) -> list:
        return []


def as_condenser(obj: Any, kind: StrategyKind, params: CondenserParams | None = None,
                 exemplars: ExemplarSet | None = None, tokenizer: Tokenizer = DEFAULT_TOKENIZER):
    """Accept a ready condenser (``.condense``) or wrap a text backend (``.complete``)."""
    if hasattr(obj, "condense"):
        return obj
    mode = "summarize" if kind is StrategyKind.MT_OSC_SUMMARIZER else "fewshot"
    return Condenser(obj, params, exemplars, mode=mode, tokenizer=tokenizer)


class CondensingHistory:
    """Drives a :class:`SessionState` with the decider and a background condenser.

    In replay mode (the default) a job's outcome is collected exactly at its
    integration boundary, waiting for it if necessary, so runs depend only on
    turn order and never on wall-clock timing. With ``replay=False`` a job
    that has not finished by its boundary simply stays pending and is applied
    at the first later turn where it is done.
    """

    def __init__(self, config: WindowConfig, condenser: Any, tokenizer: Tokenizer = DEFAULT_TOKENIZER,
                 *, replay: bool = True, stopwords: frozenset[str] | None = None):
        self.session = SessionState(config=config, tokenizer=tokenizer)
        self.condenser = condenser
        self.replay = replay
        self.stopwords = stopwords
        self._executor = ThreadPoolExecutor(max_workers=1, thread_name_prefix="condense")
        self._future: Future | None = None
        self._user_tokens = 0

    def _settle(self, wait: bool) -> list[Event]:
        job = self.session.pending_job
        if job is None or job.status is not JobStatus.PENDING or self._future is None:
            return []
        if not wait and not self._future.done():
            return []
        future, self._future = self._future, None
        try:
            outcome: CondenseOutcome = future.result()
        except ParseFailedAfterRetries as exc:
            mark_job_failed(self.session, str(exc), input_tokens=exc.input_tokens, output_tokens=exc.output_tokens)
            return [Event.FAILED]
        except Exception as exc:  # any backend/condenser failure degrades to raw history
            mark_job_failed(self.session, f"{type(exc).__name__}: {exc}")
            return [Event.FAILED]
        p = outcome.parsed
        mark_job_ready(
            self.session, p.human_input, p.assistant_summary, p.reasoning,
            input_tokens=outcome.input_tokens, output_tokens=outcome.output_tokens,
        )
        return []

    def begin(self, user_text: str) -> TurnStart:
        begin_user_turn(self.session, user_text)
        events: list[Event] = []
        if job_due(self.session):
            events += self._settle(wait=self.replay)
        generation = self.session.next_generation_index
        messages = build_prompt_history(self.session)
        if self.session.next_generation_index != generation:
            events.append(Event.INTEGRATED)
        return TurnStart(messages, len(messages) - 1, events)

    def complete(self, reply: str) -> TurnEnd:
        assert self.session.current_user_turn is not None
        self._user_tokens += self.session.current_user_turn.token_count
        _, trigger = complete_assistant_reply(self.session, reply)
        if trigger is None:
            return TurnEnd()
        verdict = decide(
            trigger.window,
            self.session.config,
            self.session.tokenizer,
            history_user_tokens=self._user_tokens,
            stopwords=self.stopwords,
        )
        if verdict.withheld:
            record_withheld(self.session, trigger)
            return TurnEnd([Event.WITHHELD], verdict)
        start_job(self.session, trigger)
        self._future = self._executor.submit(self.condenser.condense, list(trigger.window))
        return TurnEnd([Event.TRIGGERED], verdict)

    def finish(self) -> list:
        """Collect any still-running job so its tokens are charged; returns the job log."""
        self._settle(wait=True)
        job = self.session.pending_job
        if job is not None:
            # finished but never integrated because the transcript ended first
            self.session.pending_job = None
            self.session.job_log.append(job)
        self._executor.shutdown(wait=True)
        return list(self.session.job_log)


def make_history(strategy: Strategy, condenser: Any = None, tokenizer: Tokenizer = DEFAULT_TOKENIZER,
                 *, replay: bool = True):
    if strategy.kind is StrategyKind.MT_BASELINE:
        return RawHistory(None, tokenizer)
    if strategy.kind is StrategyKind.FIFO:
        return RawHistory(strategy.fifo_limit, tokenizer)
    if condenser is None:
        raise ValueError(f"strategy {strategy.kind.value} needs a condenser or condenser backend")
    return CondensingHistory(strategy.window_config, as_condenser(condenser, strategy.kind, tokenizer=tokenizer),
                             tokenizer, replay=replay)
