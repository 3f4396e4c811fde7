"""Session state for one-off sequential condensation of chat history.

A session holds an ordered list of history entries. Every ``w`` entries a
background condensation is requested over the whole live history; its result
(a single condensed user/assistant pair) replaces those entries once the job
is ready and the integration delay has elapsed. Turns completed while the job
was running stay raw after the condensed pair.

All functions mutate the session in place and return it, so calls chain the
same way for the owning context and for tests.
"""
from __future__ import annotations

import copy
import enum
from dataclasses import dataclass, field
from typing import Union

from .errors import HistCondenseError
from .tokens import DEFAULT_TOKENIZER, Tokenizer


class SessionError(HistCondenseError):
    pass


class AlreadyOpenTurn(SessionError):
    pass


class NoOpenTurn(SessionError):
    pass


class NotReady(SessionError):
    pass


class StaleJob(SessionError):
    pass


class Role(str, enum.Enum):
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class Turn:
    role: Role
    text: str
    token_count: int

    @classmethod
    def make(cls, role: Role, text: str, tokenizer: Tokenizer = DEFAULT_TOKENIZER) -> "Turn":
        return cls(role=role, text=text, token_count=tokenizer.count(text))


@dataclass(frozen=True)
class ExchangePair:
    user: Turn
    assistant: Turn
    turn_index: int

    def __post_init__(self) -> None:
        if self.user.role is not Role.USER or self.assistant.role is not Role.ASSISTANT:
            raise ValueError("ExchangePair roles must be (user, assistant)")
        if self.turn_index < 1:
            raise ValueError("turn_index is 1-based")

    @property
    def user_text(self) -> str:
        return self.user.text

    @property
    def assistant_text(self) -> str:
        return self.assistant.text

    @property
    def first_turn(self) -> int:
        return self.turn_index

    @property
    def last_turn(self) -> int:
        return self.turn_index


@dataclass(frozen=True)
class CondensedPair:
    human_input: str
    assistant_summary: str
    reasoning: str = ""
    covers_from: int = 0
    covers_to: int = 0
    generation_index: int = 1

    def __post_init__(self) -> None:
        if self.covers_from > self.covers_to:
            raise ValueError("covers_from must be <= covers_to")

    @property
    def user_text(self) -> str:
        return self.human_input

    @property
    def assistant_text(self) -> str:
        return self.assistant_summary

    @property
    def first_turn(self) -> int:
        return self.covers_from

    @property
    def last_turn(self) -> int:
        return self.covers_to


HistoryEntry = Union[ExchangePair, CondensedPair]


def entry_messages(entry: HistoryEntry) -> list[tuple[str, str]]:
    """Render one entry as (role, text) messages. Reasoning is never emitted."""
    return [("user", entry.user_text), ("assistant", entry.assistant_text)]


@dataclass
class WindowConfig:
    w: int = 4
    gamma: float = 0.2
    tau: int = 1000
    integration_delay_turns: int = 1
    decider_enabled: bool = True
    # "window" sums user tokens over the triggered window, "history" over every user turn so far
    tau_scope: str = "window"
    # "global" shared-mass ratio or "pairwise" mean Jaccard over assistant novel sets
    overlap_mode: str = "global"

    def __post_init__(self) -> None:
        if self.w < 2:
            raise ValueError(f"w must be >= 2, got {self.w}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if self.integration_delay_turns < 1:
            raise ValueError("integration_delay_turns must be >= 1")
        if self.tau_scope not in ("window", "history"):
            raise ValueError(f"unknown tau_scope {self.tau_scope!r}")
        if self.overlap_mode not in ("global", "pairwise"):
            raise ValueError(f"unknown overlap_mode {self.overlap_mode!r}")


class JobStatus(str, enum.Enum):
    PENDING = "pending"
    READY = "ready"
    FAILED = "failed"
    WITHHELD = "withheld"


@dataclass(frozen=True)
class TriggerRequest:
    window: tuple[HistoryEntry, ...]
    trigger_turn: int


@dataclass
class CondensationJob:
    input_window: tuple[HistoryEntry, ...]
    trigger_turn: int
    generation_index: int
    status: JobStatus = JobStatus.PENDING
    result: CondensedPair | None = None
    input_tokens: int = 0
    output_tokens: int = 0
    error: str | None = None

    @property
    def covers_from(self) -> int:
        return self.input_window[0].first_turn

    @property
    def covers_to(self) -> int:
        return self.input_window[-1].last_turn


@dataclass
class SessionState:
    config: WindowConfig = field(default_factory=WindowConfig)
    tokenizer: Tokenizer = DEFAULT_TOKENIZER
    entries: list[HistoryEntry] = field(default_factory=list)
    pending_job: CondensationJob | None = None
    decider_withheld_at: list[int] = field(default_factory=list)
    next_generation_index: int = 1
    current_user_turn: Turn | None = None
    turns_completed: int = 0
    # resolved jobs in the order they finished, for reporting
    job_log: list[CondensationJob] = field(default_factory=list)

    @property
    def current_turn_index(self) -> int:
        return self.turns_completed + 1

    @property
    def condensed(self) -> CondensedPair | None:
        if self.entries and isinstance(self.entries[0], CondensedPair):
            return self.entries[0]
        return None


def begin_user_turn(session: SessionState, text: str) -> SessionState:
    if session.current_user_turn is not None:
        raise AlreadyOpenTurn(f"turn {session.current_turn_index} is still waiting for a reply")
    session.current_user_turn = Turn.make(Role.USER, text, session.tokenizer)
    return session


def _integration_due(session: SessionState, job: CondensationJob) -> bool:
    return session.current_turn_index >= job.trigger_turn + session.config.integration_delay_turns + 1


def job_due(session: SessionState) -> bool:
    """True when the pending job's result should be applied at the current turn."""
    job = session.pending_job
    return job is not None and _integration_due(session, job)


def integrate_ready_job(session: SessionState) -> SessionState:
    job = session.pending_job
    if job is None or job.status is not JobStatus.READY:
        raise NotReady("no ready condensation job")
    if not _integration_due(session, job):
        raise NotReady(
            f"job triggered at turn {job.trigger_turn} cannot be applied before turn "
            f"{job.trigger_turn + session.config.integration_delay_turns + 1}"
        )
    n = len(job.input_window)
    if tuple(session.entries[:n]) != job.input_window:
        raise StaleJob("session history no longer starts with the job's window")
    assert job.result is not None
    session.entries = [job.result, *session.entries[n:]]
    session.pending_job = None
    session.next_generation_index += 1
    session.job_log.append(job)
    return session


def build_prompt_history(session: SessionState) -> list[tuple[str, str]]:
    """History messages followed by the open user turn, integrating a due job first."""
    if session.current_user_turn is None:
        raise NoOpenTurn("build_prompt_history needs an open user turn")
    job = session.pending_job
    if job is not None and job.status is JobStatus.READY and _integration_due(session, job):
        integrate_ready_job(session)
    messages: list[tuple[str, str]] = []
    for entry in session.entries:
        messages.extend(entry_messages(entry))
    messages.append(("user", session.current_user_turn.text))
    return messages


def complete_assistant_reply(
    session: SessionState, text: str
) -> tuple[SessionState, TriggerRequest | None]:
    if session.current_user_turn is None:
        raise NoOpenTurn("no user turn to answer")
    session.turns_completed += 1
    pair = ExchangePair(
        user=session.current_user_turn,
        assistant=Turn.make(Role.ASSISTANT, text, session.tokenizer),
        turn_index=session.turns_completed,
    )
    session.entries.append(pair)
    session.current_user_turn = None
    w = session.config.w
    # >= rather than == so a failed or withheld window re-arms at every later pair
    if session.pending_job is None and len(session.entries) >= w:
        window = tuple(copy.copy(e) for e in session.entries[:w])
        return session, TriggerRequest(window=window, trigger_turn=pair.turn_index)
    return session, None


def start_job(session: SessionState, trigger: TriggerRequest) -> CondensationJob:
    if session.pending_job is not None:
        raise SessionError("a condensation job is already pending")
    job = CondensationJob(
        input_window=trigger.window,
        trigger_turn=trigger.trigger_turn,
        generation_index=session.next_generation_index,
    )
    session.pending_job = job
    return job


def mark_job_ready(
    session: SessionState, human_input: str, assistant_summary: str, reasoning: str = "",
    *, input_tokens: int = 0, output_tokens: int = 0,
) -> CondensationJob:
    job = session.pending_job
    if job is None:
        raise SessionError("no pending job")
    job.result = CondensedPair(
        human_input=human_input,
        assistant_summary=assistant_summary,
        reasoning=reasoning,
        covers_from=job.covers_from,
        covers_to=job.covers_to,
        generation_index=job.generation_index,
    )
    job.status = JobStatus.READY
    job.input_tokens = input_tokens
    job.output_tokens = output_tokens
    return job


def mark_job_failed(
    session: SessionState, error: str, *, input_tokens: int = 0, output_tokens: int = 0
) -> CondensationJob:
    """Fail the pending job; history stays raw and the trigger re-arms."""
    job = session.pending_job
    if job is None:
        raise SessionError("no pending job")
    job.status = JobStatus.FAILED
    job.error = error
    job.input_tokens = input_tokens
    job.output_tokens = output_tokens
    session.pending_job = None
    session.job_log.append(job)
    return job


def record_withheld(session: SessionState, trigger: TriggerRequest) -> CondensationJob:
    job = CondensationJob(
        input_window=trigger.window,
        trigger_turn=trigger.trigger_turn,
        generation_index=session.next_generation_index,
        status=JobStatus.WITHHELD,
    )
    session.decider_withheld_at.append(trigger.trigger_turn)
    session.job_log.append(job)
    return job


def history_token_count(session: SessionState, tokenizer: Tokenizer | None = None) -> int:
    """Tokens of the history part of the prompt (everything but the open user turn)."""
    tok = tokenizer or session.tokenizer
    return sum(tok.count(text) for entry in session.entries for _, text in entry_messages(entry))
