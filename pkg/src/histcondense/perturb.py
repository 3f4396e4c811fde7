"""Seeded robustness perturbations of user-turn transcripts.

Randomness comes from :class:`random.Random` seeded with ``PerturbSpec.seed``.
Python documents that seeding with an ``int`` and calling ``sample`` /
``choice`` is reproducible across platforms, so a (turns, spec) pair always
yields the same variant.
"""
from __future__ import annotations

import enum
import math
import random
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

from .backend import BackendError, Completion, TextBackend
from .errors import HistCondenseError

FILLER_WORDS = ("Um.", "Uh.", "Well.", "Anyway.", "Ok.", "Hmm.")

DIVERSION_PROMPT = (
    "Can you come up with related but distracting information as new entry in user inputs, for example:\n"
    "\n"
    "Input:\n"
    "Check for availability of meeting rooms for next week.\n"
    "\n"
    "Output:\n"
    "Meeting rooms are often in high demand, especially during peak business hours. It's a good idea "
    "to consider alternative locations or virtual meeting options in case the preferred rooms are fully "
    "booked. Additionally, checking the amenities available in each room, such as video conferencing "
    "equipment or whiteboards, can help ensure that the meeting runs smoothly.\n"
    "\n"
    "Make sure the added information is not helping make the instructions more clear.\n"
    "\n"
    "Please respond only with the output without any extra explanations or text.\n"
    "\n"
    "Here is the input to modify:\n"
)


class PerturbError(HistCondenseError):
    pass


class TooShort(PerturbError):
    pass


class BlankTurn(PerturbError):
    pass


class GeneratorError(PerturbError):
    pass


class PerturbKind(str, enum.Enum):
    REPETITION_INFUSION = "ri"
    FILLER_INJECTION = "fi"
    CONTEXTUAL_DIVERSION = "cd"


@dataclass(frozen=True)
class DiversionParams:
    temperature: float = 1.0
    top_p: float = 0.75
    max_tokens: int = 4096
    model_id: str = "gpt-4o"


@dataclass(frozen=True)
class PerturbSpec:
    kind: PerturbKind
    ratio: float = 0.25
    n_override: int | None = None
    seed: int = 0
    diversion_params: DiversionParams | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.ratio <= 1.0:
            raise ValueError(f"ratio must be in (0, 1], got {self.ratio}")
        if self.n_override is not None and self.n_override < 0:
            raise ValueError("n_override must be >= 0")

    def requested_n(self, n_turns: int) -> int:
        if self.n_override is not None:
            return self.n_override
        return max(1, math.ceil(self.ratio * n_turns))

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d


@dataclass
class PerturbResult:
    turns: list[str]
    # indices into the original transcript that were selected
    selected: list[int] = field(default_factory=list)
    # indices into the output where new turns were placed
    inserted_at: list[int] = field(default_factory=list)


def _select(eligible: range, spec: PerturbSpec, n_turns: int) -> list[int]:
    n = min(spec.requested_n(n_turns), len(eligible))
    return sorted(random.Random(spec.seed).sample(list(eligible), n))


def repetition_infusion_detailed(turns: Sequence[str], spec: PerturbSpec) -> PerturbResult:
    if len(turns) < 3:
        raise TooShort("repetition infusion needs at least 3 turns")
    chosen = set(_select(range(1, len(turns) - 1), spec, len(turns)))
    out: list[str] = []
    inserted = []
    for i, turn in enumerate(turns):
        out.append(turn)
        if i in chosen:
            inserted.append(len(out))
            out.append(turn)
    return PerturbResult(out, sorted(chosen), inserted)


def filler_injection_detailed(turns: Sequence[str], spec: PerturbSpec) -> PerturbResult:
    if len(turns) < 2:
        raise TooShort("filler injection needs at least 2 turns")
    rng = random.Random(spec.seed)
    n = min(spec.requested_n(len(turns)), len(turns) - 1)
    chosen = sorted(rng.sample(range(1, len(turns)), n))
    fillers = {i: rng.choice(FILLER_WORDS) for i in chosen}
    out: list[str] = []
    inserted = []
    for i, turn in enumerate(turns):
        if i in fillers:
            inserted.append(len(out))
            out.append(fillers[i])
        out.append(turn)
    return PerturbResult(out, chosen, inserted)


def build_diversion_prompt(turn_text: str) -> str:
    if not turn_text.strip():
        raise BlankTurn("cannot build a diversion for a blank turn")
    return DIVERSION_PROMPT + turn_text


def contextual_diversion_detailed(
    turns: Sequence[str], spec: PerturbSpec, generator: TextBackend
) -> PerturbResult:
    if len(turns) < 3:
        raise TooShort("contextual diversion needs at least 3 turns")
    chosen = _select(range(1, len(turns) - 1), spec, len(turns))
    params = spec.diversion_params or DiversionParams()
    distractors: dict[int, str] = {}
    for i in chosen:
        if not turns[i].strip():
            continue
        try:
            text = generator.complete(build_diversion_prompt(turns[i]), params).text
        except BackendError as exc:
            raise GeneratorError(f"distractor generation failed for turn {i}: {exc}") from exc
        distractors[i] = text.strip()
    out: list[str] = []
    inserted = []
    for i, turn in enumerate(turns):
        out.append(turn)
        if i in distractors:
            inserted.append(len(out))
            out.append(distractors[i])
    return PerturbResult(out, chosen, inserted)


def repetition_infusion(turns: Sequence[str], spec: PerturbSpec) -> list[str]:
    return repetition_infusion_detailed(turns, spec).turns


def filler_injection(turns: Sequence[str], spec: PerturbSpec) -> list[str]:
    return filler_injection_detailed(turns, spec).turns


def contextual_diversion(turns: Sequence[str], spec: PerturbSpec, generator: TextBackend) -> list[str]:
    return contextual_diversion_detailed(turns, spec, generator).turns


def perturb(turns: Sequence[str], spec: PerturbSpec, generator: TextBackend | None = None) -> PerturbResult:
    if spec.kind is PerturbKind.REPETITION_INFUSION:
        return repetition_infusion_detailed(turns, spec)
    if spec.kind is PerturbKind.FILLER_INJECTION:
        return filler_injection_detailed(turns, spec)
    if generator is None:
        raise ValueError("contextual diversion needs a generator")
    return contextual_diversion_detailed(turns, spec, generator)


class MockDistractor:
    """Offline generator that wraps the selected turn as ``DISTRACTOR(<text>)``."""

    def complete(self, prompt: str, params: Any = None) -> Completion:
        turn = prompt[len(DIVERSION_PROMPT):] if prompt.startswith(DIVERSION_PROMPT) else prompt
        return Completion(f"DISTRACTOR({turn})")
