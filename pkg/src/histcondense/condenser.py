"""Few-shot condensation prompt, backend call, and strict JSON parsing.

A condensation rewrites a window of history entries into one user/assistant
shaped pair plus a reasoning string. The reasoning is kept on the result for
inspection but is never sent back to the chat model.
"""
from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

from .backend import BackendError, TextBackend
from .errors import HistCondenseError
from .session import HistoryEntry
from .tokens import DEFAULT_TOKENIZER, Tokenizer, truncate_tokens

logger = logging.getLogger(__name__)

CONDENSER_INSTRUCTION = (
    "Condense the information from HumanInput and also share a concise summary of Assistant "
    "response to the human input. Make sure you don't miss any specific values and instructions "
    "provided by the human input that are relevant for the conversation.\n"
    "For the assistant response summary, make sure to keep any important points but keep it concise.\n"
    "Also return the reasoning behind your condensation strategy.\n"
    'Return in JSON format  {"HumanInput": "<text>", "Assistant": "<text>", "Reasoning": "<text>"}. '
    "Only return the JSON with no additional text.\n"
)

SUMMARIZER_INSTRUCTION = (
    "Summarize the information from HumanInput and also share a concise summary of Assistant "
    "response to the human input. Make sure you don't miss any specific values and instructions "
    "provided by the human input. For the assistant response summary, make sure to keep any "
    "important points but keep it concise. "
    'Return in JSON format  {"HumanInput": "<text>", "Assistant": "<text>"}. '
    "Only return the JSON with no additional text.\n"
)

HISTORY_HEADER = "Conversation History:"


class CondenserError(HistCondenseError):
    pass


class EmptyWindow(CondenserError):
    pass


class ParseError(CondenserError):
    pass


class NoJsonFound(ParseError):
    pass


class MissingKey(ParseError):
    def __init__(self, name: str):
        super().__init__(f"missing key {name!r}")
        self.name = name


class EmptyField(ParseError):
    def __init__(self, name: str):
        super().__init__(f"field {name!r} is empty or not a string")
        self.name = name


class ParseFailedAfterRetries(CondenserError):
    def __init__(self, attempts: int, last_error: ParseError, input_tokens: int, output_tokens: int):
        super().__init__(f"unparseable condenser output after {attempts} attempts: {last_error}")
        self.attempts = attempts
        self.last_error = last_error
        self.input_tokens = input_tokens
        self.output_tokens = output_tokens


class InvalidExemplars(CondenserError):
    pass


@dataclass(frozen=True)
class Exemplar:
    conversation: str
    output: str


@dataclass(frozen=True)
class ExemplarSet:
    exemplars: tuple[Exemplar, ...]

    def __post_init__(self) -> None:
        if len(self.exemplars) < 3:
            raise InvalidExemplars(f"need at least 3 exemplars, got {len(self.exemplars)}")
        for i, ex in enumerate(self.exemplars):
            try:
                parse_condenser_output(ex.output, strict=True)
            except ParseError as exc:
                raise InvalidExemplars(f"exemplar {i}: {exc}") from exc

    @classmethod
    def from_json(cls, data: str) -> "ExemplarSet":
        items = json.loads(data)
        if not isinstance(items, list):
            raise InvalidExemplars("exemplar file must hold a JSON array")
        try:
            return cls(tuple(Exemplar(str(it["conversation"]), str(it["output"])) for it in items))
        except (KeyError, TypeError) as exc:
            raise InvalidExemplars(f"bad exemplar entry: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path | None = None) -> "ExemplarSet":
        if path is None:
            text = resources.files("histcondense.data").joinpath("exemplars.json").read_text("utf-8")
        else:
            text = Path(path).read_text("utf-8")
        return cls.from_json(text)


@dataclass(frozen=True)
class CondenserParams:
    temperature: float = 0.01
    frequency_penalty: float = 1.0
    max_completion_tokens: int = 10000
    top_p: float = 1.0
    model_id: str = "meta-llama/Llama-3.3-70B-Instruct"

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], base: "CondenserParams | None" = None) -> "CondenserParams":
        base = base or cls()
        values = {f.name: getattr(base, f.name) for f in fields(cls)}
        for f in fields(cls):
            if f.name in data and data[f.name] is not None:
                values[f.name] = type(values[f.name])(data[f.name])
        return cls(**values)

    @classmethod
    def from_env(cls, base: "CondenserParams | None" = None, prefix: str = "HISTCONDENSE_CONDENSER_") -> "CondenserParams":
        env = {f.name: os.environ.get(prefix + f.name.upper()) for f in fields(cls)}
        return cls.from_mapping(env, base)


def render_window(window: Sequence[HistoryEntry]) -> str:
    blocks = []
    for entry in window:
        blocks.append(f"Human: {entry.user_text}")
        blocks.append(f"Assistant: {entry.assistant_text}")
    return "\n\n".join(blocks)


def build_condenser_prompt(window: Sequence[HistoryEntry], exemplars: ExemplarSet) -> str:
    if not window:
        raise EmptyWindow("cannot condense an empty window")
    parts = [CONDENSER_INSTRUCTION, "Examples:\n"]
    for ex in exemplars.exemplars:
        parts.append(f"{HISTORY_HEADER} {ex.conversation}\n{ex.output}\n")
    parts.append(f"{HISTORY_HEADER}\n{render_window(window)}\n")
    return "\n".join(parts)


def build_summarizer_prompt(window: Sequence[HistoryEntry]) -> str:
    if not window:
        raise EmptyWindow("cannot summarize an empty window")
    return f"{SUMMARIZER_INSTRUCTION}\n{render_window(window)}\n"


@dataclass(frozen=True)
class ParsedCondensation:
    human_input: str
    assistant_summary: str
    reasoning: str = ""


def _first_json_object(text: str) -> dict | None:
    decoder = json.JSONDecoder()
    start = text.find("{")
    while start != -1:
        try:
            obj, _ = decoder.raw_decode(text, start)
        except (json.JSONDecodeError, RecursionError):
            obj = None
        if isinstance(obj, dict):
            return obj
        start = text.find("{", start + 1)
    return None


def parse_condenser_output(text: str | bytes, *, strict: bool = False) -> ParsedCondensation:
    """Extract the condensed pair from model output.

    By default the first complete JSON object anywhere in ``text`` is used, since
    models sometimes wrap the JSON in prose. ``strict=True`` requires the whole
    text to be one JSON object.
    """
    if isinstance(text, (bytes, bytearray)):
        text = bytes(text).decode("utf-8", errors="replace")
    if strict:
        try:
            obj = json.loads(text)
        except (json.JSONDecodeError, RecursionError) as exc:
            raise NoJsonFound(f"not a JSON document: {exc}") from None
        if not isinstance(obj, dict):
            raise NoJsonFound("JSON document is not an object")
    else:
        obj = _first_json_object(text)
        if obj is None:
            raise NoJsonFound("no JSON object in condenser output")

    values = {}
    for key in ("HumanInput", "Assistant"):
        if key not in obj:
            raise MissingKey(key)
        value = obj[key]
        if not isinstance(value, str) or not value.strip():
            raise EmptyField(key)
        values[key] = value
    reasoning = obj.get("Reasoning", "")
    if not isinstance(reasoning, str):
        reasoning = json.dumps(reasoning)
    return ParsedCondensation(values["HumanInput"], values["Assistant"], reasoning)


def serialize_condensation(pair: ParsedCondensation) -> str:
    return json.dumps(
        {"HumanInput": pair.human_input, "Assistant": pair.assistant_summary, "Reasoning": pair.reasoning},
        ensure_ascii=False,
    )


@dataclass(frozen=True)
class CondenseOutcome:
    parsed: ParsedCondensation
    input_tokens: int
    output_tokens: int
    attempts: int = 1
    prompt: str = ""


class Condenser:
    """Prompted condensation through a text backend.

    ``mode="fewshot"`` uses the exemplar prompt; ``mode="summarize"`` swaps in
    the plain summarization prompt (no exemplars, no reasoning field) while
    everything else stays the same.
    """

    def __init__(
        self,
        backend: TextBackend,
        params: CondenserParams | None = None,
        exemplars: ExemplarSet | None = None,
        *,
        mode: str = "fewshot",
        retry_limit: int = 2,
        strict: bool = False,
        tokenizer: Tokenizer = DEFAULT_TOKENIZER,
    ):
        if mode not in ("fewshot", "summarize"):
            raise ValueError(f"unknown condenser mode {mode!r}")
        self.backend = backend
        self.params = params or CondenserParams()
        self.exemplars = exemplars if exemplars is not None or mode == "summarize" else ExemplarSet.load()
        self.mode = mode
        self.retry_limit = retry_limit
        self.strict = strict
        self.tokenizer = tokenizer

    def build_prompt(self, window: Sequence[HistoryEntry]) -> str:
        if self.mode == "summarize":
            return build_summarizer_prompt(window)
        return build_condenser_prompt(window, self.exemplars)

    def condense(self, window: Sequence[HistoryEntry]) -> CondenseOutcome:
        prompt = self.build_prompt(window)
        tokens_in = tokens_out = 0
        last_error: ParseError | None = None
        for attempt in range(1, self.retry_limit + 2):
            completion = self.backend.complete(prompt, self.params)
            tokens_in += completion.prompt_tokens if completion.prompt_tokens is not None else self.tokenizer.count(prompt)
            tokens_out += (
                completion.completion_tokens
                if completion.completion_tokens is not None
                else self.tokenizer.count(completion.text)
            )
            try:
                parsed = parse_condenser_output(completion.text, strict=self.strict)
            except ParseError as exc:
                logger.warning("condenser output unparseable (attempt %d): %s", attempt, exc)
                last_error = exc
                continue
            return CondenseOutcome(parsed, tokens_in, tokens_out, attempt, prompt)
        assert last_error is not None
        raise ParseFailedAfterRetries(self.retry_limit + 1, last_error, tokens_in, tokens_out)


def condense(
    window: Sequence[HistoryEntry],
    backend: TextBackend,
    params: CondenserParams | None = None,
    exemplars: ExemplarSet | None = None,
    *,
    retry_limit: int = 2,
) -> CondenseOutcome:
    return Condenser(backend, params, exemplars, retry_limit=retry_limit).condense(window)


def mock_condense(
    window: Sequence[HistoryEntry], ratio: float, tokenizer: Tokenizer = DEFAULT_TOKENIZER
) -> ParsedCondensation:
    """Deterministic stand-in: keep the leading ``ceil(ratio * n)`` tokens of each side."""
    if not window:
        raise EmptyWindow("cannot condense an empty window")
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    user = " ".join(e.user_text for e in window)
    assistant = " ".join(e.assistant_text for e in window)
    n_user = math.ceil(ratio * sum(tokenizer.count(e.user_text) for e in window))
    n_assistant = math.ceil(ratio * sum(tokenizer.count(e.assistant_text) for e in window))
    # an empty side would not survive parsing; keep one placeholder token
    return ParsedCondensation(
        truncate_tokens(user, n_user) or "(none)",
        truncate_tokens(assistant, n_assistant) or "(none)",
        "mock",
    )


class MockCondenser:
    """Condenser double built on :func:`mock_condense`; charges the window as input."""

    def __init__(self, ratio: float = 0.2, tokenizer: Tokenizer = DEFAULT_TOKENIZER):
        self.ratio = ratio
        self.tokenizer = tokenizer

    def condense(self, window: Sequence[HistoryEntry]) -> CondenseOutcome:
        parsed = mock_condense(window, self.ratio, self.tokenizer)
        tokens_in = sum(self.tokenizer.count(e.user_text) + self.tokenizer.count(e.assistant_text) for e in window)
        tokens_out = self.tokenizer.count(parsed.human_input) + self.tokenizer.count(parsed.assistant_summary)
        return CondenseOutcome(parsed, tokens_in, tokens_out)


__all__ = [
    "BackendError",
    "CONDENSER_INSTRUCTION",
    "SUMMARIZER_INSTRUCTION",
    "Condenser",
    "CondenserParams",
    "CondenseOutcome",
    "EmptyField",
    "EmptyWindow",
    "Exemplar",
    "ExemplarSet",
    "MissingKey",
    "MockCondenser",
    "NoJsonFound",
    "ParseError",
    "ParseFailedAfterRetries",
    "ParsedCondensation",
    "build_condenser_prompt",
    "build_summarizer_prompt",
    "condense",
    "mock_condense",
    "parse_condenser_output",
    "render_window",
    "serialize_condensation",
]
