"""Grid sweep over the decider thresholds."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Sequence

from ..tokens import DEFAULT_TOKENIZER, Tokenizer
from .chat_models import ChatModel
from .runner import TtftModel, run_strategy
from .strategies import Strategy
from .transcripts import Transcript

DEFAULT_GAMMAS = (0.1, 0.2, 0.3, 0.4)
DEFAULT_TAUS = (500, 1000, 2000, 3000, 4000)


@dataclass
class SweepCell:
    gamma: float
    tau: int
    sessions: int
    routed_to_condensation: int
    withheld: int
    avg_history_tokens: float
    total_tokens_with_background: int
    exact_match_accuracy: float | None


@dataclass
class SweepReport:
    base_strategy: dict[str, Any]
    cells: list[SweepCell] = field(default_factory=list)

    def cell(self, gamma: float, tau: int) -> SweepCell:
        for c in self.cells:
            if c.gamma == gamma and c.tau == tau:
                return c
        raise KeyError((gamma, tau))

    def to_dict(self) -> dict[str, Any]:
        return {"base_strategy": self.base_strategy, "cells": [asdict(c) for c in self.cells]}


def decider_sweep(
    transcripts: Sequence[Transcript],
    gammas: Sequence[float],
    taus: Sequence[int],
    strategy: Strategy,
    chat_model: ChatModel,
    condenser_factory: Callable[[], Any] | Any,
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
    ttft_model: TtftModel = TtftModel(),
    *,
    concurrency: int = 1,
) -> SweepReport:
    """Run ``strategy`` once per (gamma, tau) cell, gammas outer, taus inner."""
    if not gammas or not taus:
        raise ValueError("sweep grids must be non-empty")
    if not strategy.condenses:
        raise ValueError("decider sweep needs a condensing strategy")
    report = SweepReport(base_strategy=strategy.to_dict())
    for gamma in gammas:
        for tau in taus:
            cell_strategy = strategy.with_window(gamma=gamma, tau=tau)
            run = run_strategy(transcripts, cell_strategy, chat_model, condenser_factory, tokenizer, ttft_model,
                               concurrency=concurrency)
            agg = run.aggregates()
            report.cells.append(
                SweepCell(
                    gamma=gamma,
                    tau=tau,
                    sessions=agg["sessions"],
                    routed_to_condensation=agg["condensed_session_count"],
                    withheld=agg["withheld_session_count"],
                    avg_history_tokens=agg["avg_history_tokens"],
                    total_tokens_with_background=agg["total_tokens_with_background"],
                    exact_match_accuracy=agg["exact_match_accuracy"],
                )
            )
    return report
